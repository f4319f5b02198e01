"""Train a small geometric neural operator on the curvature task.

A point cloud goes in; the seven geometric channels (E, F, G, L, M, N,
K) come out.  This desk-size run takes a couple of minutes on one core.

Run:  python3 demos/demo_operator_training.py
"""

from geonop import (GnpConfig, GnpModel, NoiseSpec, Schedule, TrainConfig,
                    build_task_a, train)

train_ds, test_ds = build_task_a(num_train=10, num_test=4, n_points=128,
                                 noise=NoiseSpec(), seed=0)
print(f"dataset: {train_ds.clouds.shape[0]} train / "
      f"{test_ds.clouds.shape[0]} test shapes, "
      f"{train_ds.clouds.shape[1]} points each")

cfg = GnpConfig(in_channels=3, out_channels=7, latent_dim=16, depth=3,
                kernel_width=32, radius=0.5)
tcfg = TrainConfig(epochs=30, lr0=1e-3, seed=0,
                   schedule=Schedule("halve_every", 15))
model = GnpModel(cfg, seed=0)
print(f"model: {model.parameter_count()} parameters")

model, metrics, _ = train(model, train_ds.samples(), test_ds.samples(), tcfg,
                          log=lambda e: print(
                              f"  epoch {e['epoch']:3d}  loss {e['loss']:.3e}"
                              f"  lr {e['lr']:.1e}")
                          if e["epoch"] % 5 == 0 else None)
first, last = metrics.epochs[0]["loss"], metrics.epochs[-1]["loss"]
print(f"loss: {first:.3e} -> {last:.3e} ({first / last:.0f}x decrease)")
print(f"relative L2: train {metrics.final['train_rel_l2']:.3f}, "
      f"test {metrics.final['test_rel_l2']:.3f}")
