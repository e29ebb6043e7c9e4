import numpy as np
import pytest
import torch

from interflow import checkpoint as ck
from interflow.config import desk_config
from interflow.errors import CheckpointError
from interflow.pipeline import build_model, load_model


def params_of(model):
    return model.param_arrays()


class TestRoundTrip:
    def test_bit_exact(self, tmp_path, rng):
        params = {
            "a.weight": rng.standard_normal((3, 4, 5)).astype(np.float32),
            "b.bias": rng.standard_normal(7).astype(np.float32),
            "scalarish": np.float32(rng.standard_normal()).reshape(()),
        }
        p = tmp_path / "x.rifc"
        ck.save_checkpoint(p, params, desk_config(), step=42, seed=7, extra={"mode": "mid"})
        back = ck.load_checkpoint(p)
        assert back.step == 42 and back.seed == 7
        assert back.extra["mode"] == "mid"
        assert set(back.params) == set(params)
        for k in params:
            np.testing.assert_array_equal(back.params[k], params[k])
            assert back.params[k].dtype == np.float32

    def test_model_round_trip(self, tmp_path):
        torch.manual_seed(0)
        model = build_model(desk_config())
        p = tmp_path / "m.rifc"
        ck.save_checkpoint(p, params_of(model), model.config, 0, 0, {"mode": "mid"})
        loaded = load_model(p)
        for (n1, p1), (n2, p2) in zip(model.ifnet.state_dict().items(),
                                      loaded.ifnet.state_dict().items()):
            assert n1 == n2
            assert torch.equal(p1, p2)

    def test_config_survives(self, tmp_path):
        cfg = desk_config()
        p = tmp_path / "c.rifc"
        ck.save_checkpoint(p, {"x": np.zeros(3, np.float32)}, cfg, 1, 2)
        back = ck.load_checkpoint(p)
        assert back.config.to_dict() == cfg.to_dict()


class TestCorruption:
    def _save(self, tmp_path):
        p = tmp_path / "x.rifc"
        ck.save_checkpoint(p, {"w": np.arange(6, dtype=np.float32).reshape(2, 3)},
                           desk_config(), 0, 0)
        return p

    def test_bad_magic(self, tmp_path):
        p = self._save(tmp_path)
        blob = bytearray(p.read_bytes())
        blob[0] = ord("X")
        p.write_bytes(bytes(blob))
        with pytest.raises(CheckpointError, match="magic"):
            ck.load_checkpoint(p)

    def test_flipped_payload_byte(self, tmp_path):
        p = self._save(tmp_path)
        blob = bytearray(p.read_bytes())
        blob[20] ^= 0xFF
        p.write_bytes(bytes(blob))
        with pytest.raises(CheckpointError, match="CRC"):
            ck.load_checkpoint(p)

    def test_truncation(self, tmp_path):
        p = self._save(tmp_path)
        p.write_bytes(p.read_bytes()[:-9])
        with pytest.raises(CheckpointError):
            ck.load_checkpoint(p)

    def test_unsupported_version(self, tmp_path):
        p = self._save(tmp_path)
        blob = bytearray(p.read_bytes())
        blob[4] = 99  # version field
        import zlib, struct
        payload = bytes(blob[4:-4])
        crc = zlib.crc32(payload) & 0xFFFFFFFF
        p.write_bytes(blob[:4] + payload + struct.pack("<I", crc))
        with pytest.raises(CheckpointError, match="version"):
            ck.load_checkpoint(p)

    def test_missing_file(self, tmp_path):
        with pytest.raises(CheckpointError):
            ck.load_checkpoint(tmp_path / "absent.rifc")


class TestInferenceExport:
    def test_teacher_and_optimizer_arrays_dropped(self, tmp_path):
        torch.manual_seed(0)
        model = build_model(desk_config())
        params = params_of(model)
        params["opt.ifnet.blocks.0.head.weight.exp_avg"] = np.zeros((5, 5), np.float32)
        src = tmp_path / "train.rifc"
        dst = tmp_path / "infer.rifc"
        ck.save_checkpoint(src, params, model.config, 10, 3, {"mode": "mid", "opt_step": 10})
        ck.export_inference(src, dst)
        slim = ck.load_checkpoint(dst)
        assert not any(n.startswith("ifnet.teacher.") for n in slim.params)
        assert not any(n.startswith("opt.") for n in slim.params)
        assert slim.config.ifnet.teacher is None
        assert "opt_step" not in slim.extra
        assert dst.stat().st_size < src.stat().st_size

    def test_inference_checkpoint_loads_for_interpolation(self, tmp_path):
        torch.manual_seed(0)
        model = build_model(desk_config())
        src = tmp_path / "train.rifc"
        dst = tmp_path / "infer.rifc"
        ck.save_checkpoint(src, params_of(model), model.config, 0, 0, {"mode": "mid"})
        ck.export_inference(src, dst)
        slim = load_model(dst)
        assert not slim.ifnet.has_teacher
        i0, i1 = torch.rand(1, 3, 64, 64), torch.rand(1, 3, 64, 64)
        from interflow.pipeline import interpolate
        out = interpolate(slim, i0, i1, 0.5)
        assert torch.allclose(out, (i0 + i1) / 2)

    def test_missing_parameter_detected(self, tmp_path):
        torch.manual_seed(0)
        model = build_model(desk_config())
        params = params_of(model)
        params.pop("refine.out.weight")
        p = tmp_path / "broken.rifc"
        ck.save_checkpoint(p, params, model.config, 0, 0, {"mode": "mid"})
        with pytest.raises(CheckpointError, match="missing parameter"):
            load_model(p)
