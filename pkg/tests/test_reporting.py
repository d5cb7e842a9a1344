import json
import math
import os
import tempfile
import unittest

import numpy as np
import pandas as pd
from numpy.testing import assert_array_equal

from src import __version__
from src.ensemble_mc import InitialEnsemble, sample_initial
from src.hard_sphere_flow import evolve, evolve_to_dispersal
from src.illner_virial import check_illner_identity, sample_times
from src.reporting import (
    read_event_log,
    read_report,
    read_summary,
    write_event_log,
    write_report,
    write_summary,
)


class TestEventLog(unittest.TestCase):
    def setUp(self):
        self.tmpdir = tempfile.TemporaryDirectory()
        self.path = os.path.join(self.tmpdir.name, "events.ndjson")
        ens = InitialEnsemble(n=10, velocity_law="isotropic-gaussian", seed=8)
        self.traj = evolve_to_dispersal(sample_initial(ens, 1))

    def tearDown(self):
        self.tmpdir.cleanup()

    def test_record_layout(self):
        write_event_log(self.path, self.traj, {"n": 10})
        with open(self.path, encoding="utf-8") as f:
            records = [json.loads(line) for line in f]
        self.assertEqual(len(records), self.traj.n_events + 2)
        self.assertEqual(records[0]["record"], "header")
        self.assertEqual(records[0]["version"], __version__)
        self.assertEqual(records[0]["config"], {"n": 10})
        self.assertEqual(records[-1]["record"], "final")
        for record, event in zip(records[1:-1], self.traj.events):
            self.assertEqual(record["i"], event.i + 1)
            self.assertEqual(record["j"], event.j + 1)
            self.assertEqual(record["strength"], event.strength)

    def test_round_trip_is_lossless(self):
        write_event_log(self.path, self.traj)
        again, header = read_event_log(self.path)
        self.assertEqual(header["n"], 10)
        self.assertEqual(again.dispersed, self.traj.dispersed)
        self.assertEqual(again.final_time, self.traj.final_time)
        assert_array_equal(
            again.final_state.positions, self.traj.final_state.positions
        )
        for a, b in zip(again.events, self.traj.events):
            self.assertEqual(
                (a.time, a.i, a.j, a.strength), (b.time, b.i, b.j, b.strength)
            )
            assert_array_equal(a.v_j_post, b.v_j_post)
        for t in sample_times(self.traj):
            self.assertEqual(
                check_illner_identity(again, t), check_illner_identity(self.traj, t)
            )

    def test_writes_are_byte_identical(self):
        other = os.path.join(self.tmpdir.name, "again.ndjson")
        write_event_log(self.path, self.traj, {"seed": 8})
        write_event_log(other, self.traj, {"seed": 8})
        with open(self.path, "rb") as a, open(other, "rb") as b:
            self.assertEqual(a.read(), b.read())

    def test_truncated_log(self):
        write_event_log(self.path, evolve(self.traj.initial, 0.0, 1.0))
        with open(self.path, encoding="utf-8") as f:
            header = f.readline()
        with open(self.path, "w", encoding="utf-8") as f:
            f.write(header)
        with self.assertRaises(ValueError):
            read_event_log(self.path)


class TestReportAndSummary(unittest.TestCase):
    def test_report_converts_numpy_and_nan(self):
        with tempfile.TemporaryDirectory() as tmpdir:
            path = os.path.join(tmpdir, "report.yaml")
            write_report(
                path,
                {"ratio": np.float64(0.25), "count": np.int64(3), "error": math.nan},
                {"n": 4},
            )
            report = read_report(path)
        self.assertEqual(report["version"], __version__)
        self.assertEqual(report["config"], {"n": 4})
        self.assertEqual(report["ratio"], 0.25)
        self.assertEqual(report["count"], 3)
        self.assertIsNone(report["error"])

    def test_summary_has_comment_header(self):
        summary = pd.DataFrame({"events": [0, 3], "total_strength": [0.0, 1.5]})
        with tempfile.TemporaryDirectory() as tmpdir:
            path = os.path.join(tmpdir, "summary.csv")
            write_summary(path, summary, {"seed": 1})
            with open(path, encoding="utf-8") as f:
                first = f.readline()
            again = read_summary(path)
        self.assertTrue(first.startswith("# hsvirial"))
        pd.testing.assert_frame_equal(again, summary)


if __name__ == "__main__":
    unittest.main()
