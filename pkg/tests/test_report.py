import json

import pytest

from riccati_lab.report import VerificationReport


class TestVerificationReport:
    def test_pass_fail_threshold(self):
        rep = VerificationReport("abc")
        assert rep.record("good", 1e-9, 1e-6).passed
        assert not rep.record("bad", 1e-3, 1e-6).passed
        assert not rep.all_passed

    def test_duplicate_check_name_rejected(self):
        rep = VerificationReport("abc")
        rep.record("x", 0.0, 1.0)
        with pytest.raises(ValueError):
            rep.record("x", 0.0, 1.0)
        with pytest.raises(ValueError):
            rep.run("x", 1.0, lambda: 0.0)

    def test_run_measures_and_records(self):
        rep = VerificationReport("abc")
        res = rep.run("timed", 1.0, lambda: 0.5)
        assert res.residual == 0.5 and res.runtime >= 0.0

    def test_saved_json_is_sorted_and_complete(self, tmp_path):
        rep = VerificationReport("abc", config_echo={"run": {"steps": 7}})
        rep.record("b", 0.0, 1.0)
        rep.record("a", 0.0, 1.0)
        path = tmp_path / "rep.json"
        rep.save(str(path))
        data = json.loads(path.read_text())
        assert list(data["checks"]) == ["a", "b"]
        assert data["config"]["run"]["steps"] == 7
        assert data["model_id"] == "abc"
        assert "environment" in data
