"""Compare the compiled and pure numpy kernels.

    python3 benchmarks/bench_kernels.py [--steps 20000] [--repeat 3]

Prints steps per second for one exploration phase on the two-state
example game and the Dobrushin coefficient of a random 64x64 matrix, and
checks that both paths agree.
"""
import argparse
import time

import numpy as np

from teamlearn import _accel
from teamlearn.game import fig3_game


def best_of(fn, repeat):
    best = np.inf
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def phase_runner(kernel, game, steps, seed=0):
    rng = np.random.default_rng(seed)
    u_act, u_env = rng.random((steps, 2)), rng.random(steps)
    base = np.array([[0, 1], [0, 1]], dtype=np.int64)
    fixed = (np.array([2, 2]), game.action_strides, np.array([0.05, 0.05]),
             np.ascontiguousarray(game.cost), _accel.cumulative_kernel(game.kernel),
             game.discount.copy(), _accel.step_size_table([0.8, 0.8], steps + 1))

    def run():
        q = np.zeros((2, 2, 2))
        bufs = (q, np.zeros((2, 2, 2), dtype=np.int64), np.zeros((2, 2)),
                np.zeros((2, 2), dtype=np.int64))
        kernel(0, base, *fixed, *bufs, u_act, u_env, True)
        return q
    return run


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--steps", type=int, default=20000)
    p.add_argument("--repeat", type=int, default=3)
    args = p.parse_args()
    if not _accel.NUMBA_AVAILABLE:
        raise SystemExit("numba is not installed")

    game = fig3_game(0.8)
    phase_runner(_accel.simulate_phase_numba, game, 10)()  # compile outside the timing
    t_nb, q_nb = best_of(phase_runner(_accel.simulate_phase_numba, game, args.steps), args.repeat)
    t_np, q_np = best_of(phase_runner(_accel.simulate_phase_numpy, game, args.steps), args.repeat)
    print(f"simulate_phase  numba {args.steps / t_nb:12.0f} steps/s   "
          f"numpy {args.steps / t_np:10.0f} steps/s   speedup {t_np / t_nb:6.1f}x   "
          f"identical={np.array_equal(q_nb, q_np)}")

    a = np.random.default_rng(1).dirichlet(np.ones(64), size=64)
    _accel.dobrushin_numba(a[:2, :2].copy())
    t_nb, s_nb = best_of(lambda: _accel.dobrushin_numba(a), args.repeat)
    t_np, s_np = best_of(lambda: _accel.dobrushin_numpy(a), args.repeat)
    print(f"dobrushin 64x64 numba {t_nb * 1e3:9.3f} ms        numpy {t_np * 1e3:8.3f} ms"
          f"        speedup {t_np / t_nb:6.1f}x   |diff|={abs(s_nb - s_np):.1e}")


if __name__ == "__main__":
    main()
