"""Synthetic records shared by the store, metric and analysis tests."""
import math

import numpy as np

from etdcapture.database import CaptureRecord


def make_record(**kw) -> CaptureRecord:
    base = dict(gamma=0.5, z=0.0, zeta=0.0, ix=0, iy=0, branch=1, x=1.1, y=0.2, sigma=0.3, vx=0.01, vy=-0.02, vz=0.0)
    base.update(kw)
    return CaptureRecord(**base)


def synthetic_records(n: int, seed: int = 0, gammas=(0.5, 0.52), zs=(0.0, 0.02)) -> list[CaptureRecord]:
    """Records with plausible origin and perilune elements and unique keys."""
    rng = np.random.default_rng(seed)
    out = []
    for k in range(n):
        peri = {}
        for tag in ("1stRev", "rmin", "rmin1", "rmin2"):
            peri.update(
                {
                    f"r2_{tag}": float(rng.uniform(0.005, 0.05)),
                    f"t_{tag}": float(rng.uniform(0.1, 20.0)),
                    f"a_{tag}": float(rng.uniform(0.02, 0.1)),
                    f"e_{tag}": float(rng.uniform(0.1, 0.9)),
                    f"i_{tag}": float(rng.uniform(0, math.pi)),
                    f"raan_{tag}": float(rng.uniform(0, 2 * math.pi)),
                    f"argp_{tag}": float(rng.uniform(0, 2 * math.pi)),
                    f"nu_{tag}": float(rng.uniform(0, 2 * math.pi)),
                }
            )
        pro = int(rng.integers(0, 6))
        ret = int(rng.integers(0, 6))
        out.append(
            make_record(
                gamma=gammas[k % len(gammas)],
                z=zs[(k // len(gammas)) % len(zs)],
                ix=k,
                iy=-k,
                branch=1 if k % 2 else -1,
                x=float(rng.uniform(0.9, 1.1)),
                y=float(rng.uniform(-0.2, 0.2)),
                sigma=float(rng.uniform(-math.pi, math.pi)),
                n_rev_total=max(1, pro + ret),
                n_rev_prograde=pro,
                n_rev_retrograde=ret,
                t_capture=float(rng.uniform(1, 60)),
                n_crossings=int(rng.integers(1, 5)),
                t_collision=float(rng.uniform(5, 60)) if k % 3 == 0 else math.nan,
                a_T=float(rng.uniform(1.5, 2.0)),
                e_T=float(rng.uniform(0.15, 0.35)),
                i_T=float(rng.uniform(0.0, 0.2)),
                raan_T=float(rng.uniform(0, 2 * math.pi)),
                argp_T=float(rng.uniform(0, 2 * math.pi)),
                nu_T=float(rng.uniform(0, 2 * math.pi)),
                t_escape=float(rng.uniform(-12, -1)),
                i_polar=float(rng.uniform(0, math.pi)),
                r2_polar=float(rng.uniform(0.005, 0.05)),
                t_polar=float(rng.uniform(0.1, 20.0)),
                **peri,
            )
        )
    return out


ACCEPTANCE_LINES: list[str] = []


def report(tag: str, ok, detail: str) -> None:
    """Record one acceptance line; ``ok`` is True, False or None (not applicable)."""
    verdict = "N/A " if ok is None else ("PASS" if ok else "FAIL")
    line = f"[{verdict}] {tag}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def ephemeris_reference(probe, records):
    """Escape elements, in the ephemeris model, of a record that stays captured there for two revolutions."""
    from etdcapture.propagation import backward_escape
    from etdcapture.transition import escape_elements_ephemeris

    for r in records[::7]:
        rep = probe.classify_record(r)
        if rep.is_capture and rep.n_rev_total >= 2:
            traj, escaped = backward_escape(probe.ephemeris_state(r.state[None, :])[0], probe.model, probe.full_cfg)
            if escaped:
                return escape_elements_ephemeris(traj, probe.model.gm_earth)[0]
    raise AssertionError("no record survives the ephemeris model")
