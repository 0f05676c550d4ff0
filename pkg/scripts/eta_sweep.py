"""Sweep the noise-blend weight on the demo cube and tabulate pose proxy and appearance distance."""
import argparse

from vip3de.demo import DEMO_RECOLOR, demo_inputs
from vip3de.metrics import eta_sweep, format_report, plot_report, seed_means
from vip3de.pipeline import EditConfig, EditSpec, edited_video_prior, make_editor, oracle_edit
from vip3de.trajectory import build_trajectory


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--etas", type=float, nargs="+", default=[0.0, 0.1, 0.25, 0.5, 0.75, 1.0])
    ap.add_argument("--seeds", type=int, default=8)
    ap.add_argument("--frames", type=int, default=25)
    ap.add_argument("--csv", default=None, help="write the per-run table here")
    ap.add_argument("--plot", default=None, help="write a line plot here")
    args = ap.parse_args()

    scene, train, radius = demo_inputs()
    cams = build_trajectory(train, 3, args.frames, radius).cameras
    editor = make_editor("recolor", DEMO_RECOLOR)
    cfg = EditConfig(update_iters=0)
    _, frames = oracle_edit(scene, cams, editor)
    rows = eta_sweep(scene, cams, EditSpec(editor), args.etas, range(args.seeds), cfg,
                     lambda cond, src: edited_video_prior(frames, cond, cfg))
    if args.csv:
        with open(args.csv, "w") as fh:
            fh.write(format_report(rows) + "\n")
    if args.plot:
        plot_report(rows, args.plot)
    print("eta    pose_err  appearance_dist")
    for eta, (pose, app) in seed_means(rows).items():
        print(f"{eta:<6g} {pose:.5f}   {app:.5f}")


if __name__ == "__main__":
    main()
