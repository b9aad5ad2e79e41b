"""Command-line entry points: synth-data, train, eval, topology, transfer, serve."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

VARIANT_FLAGS = {
    "unit-mmd-cpo": "unit_mmd_cpo",
    "move-star-fpo": "move_star_fpo",
    "move-fpod": "move_fpod",
}


def _add_synth_data(sub):
    p = sub.add_parser("synth-data", help="generate a synthetic note corpus as WAVs + manifest")
    p.add_argument("--out", required=True)
    p.add_argument("--instruments", type=int, default=2)
    p.add_argument("--octaves", default="3,4", help="comma-separated octave list")
    p.add_argument("--velocities", type=int, default=3, help="number of velocity layers (1-3)")
    p.add_argument("--seed", type=int, default=1000)
    p.add_argument("--duration", type=float, default=1.2)
    p.set_defaults(func=cmd_synth_data)


def cmd_synth_data(args):
    from .corpus import default_instruments, synthesize_records, write_corpus_wavs

    octaves = tuple(int(o) for o in args.octaves.split(","))
    velocities = tuple(range(args.velocities))
    records, skipped = synthesize_records(
        default_instruments(args.instruments),
        octaves=octaves,
        velocities=velocities,
        duration_s=args.duration,
        tone_seed=args.seed,
    )
    manifest = write_corpus_wavs(records, args.out)
    print(f"wrote {len(records)} notes to {args.out} (skipped {skipped}); manifest {manifest}")
    return 0


def _load_split(data_dir, scfg, split_seed, t_chunk):
    from .corpus import assemble_split, ingest_wav_dir

    records, names, errors = ingest_wav_dir(data_dir, sample_rate=scfg.sample_rate)
    for fname, msg in errors:
        print(f"warning: skipped {fname}: {msg}", file=sys.stderr)
    return assemble_split(records, names, scfg, split_seed, t_chunk=t_chunk)


def _add_train(sub):
    p = sub.add_parser("train", help="train a model on a WAV corpus directory")
    p.add_argument("--data", required=True)
    p.add_argument("--variant", choices=sorted(VARIANT_FLAGS), default="move-fpod")
    p.add_argument("--epochs", type=int, default=60)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--preset", choices=("desk", "paper"), default="desk")
    p.add_argument("--batch-size", type=int, default=128)
    p.add_argument("--lr", type=float, default=1e-4)
    p.set_defaults(func=cmd_train)


def cmd_train(args):
    from .model import desk_config, full_scale_model_config
    from .spectral import SpectralConfig, full_scale_config
    from .trainer import TrainConfig, paper_schedule_config, train

    scfg = SpectralConfig() if args.preset == "desk" else full_scale_config()
    split = _load_split(args.data, scfg, args.seed, t_chunk=16)
    variant = VARIANT_FLAGS[args.variant]
    k = split.num_instruments
    mcfg = (
        desk_config(variant, num_instruments=k)
        if args.preset == "desk"
        else full_scale_model_config(variant, num_instruments=k)
    )
    if args.preset == "paper":
        tcfg = paper_schedule_config(
            args.epochs, batch_size=args.batch_size, lr=args.lr, seed=args.seed
        )
    else:
        tcfg = TrainConfig(
            total_epochs=args.epochs, batch_size=args.batch_size, lr=args.lr, seed=args.seed
        )
    out = Path(args.out)
    ckpt, records = train(split, mcfg, tcfg, out_dir=out, metrics_path=out.parent / (out.name + ".metrics.jsonl"))
    last = records[-1]
    print(f"trained {args.epochs} epochs; final total loss {last['total']:.3f}; checkpoint at {out}")
    return 0


def _add_eval(sub):
    p = sub.add_parser("eval", help="evaluate a checkpoint on its corpus")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--report", required=True)
    p.set_defaults(func=cmd_eval)


def cmd_eval(args):
    from .checkpoint import load_checkpoint
    from .evaluation import evaluate

    ckpt = load_checkpoint(args.ckpt)
    split = _load_split(
        args.data, ckpt.spectral_config, ckpt.seeds.get("data", 0), ckpt.config.t_chunk
    )
    report = evaluate(ckpt.build_model(), split)
    text = report.to_text()
    Path(args.report).write_text(text)
    print(text)
    return 0


def _add_topology(sub):
    p = sub.add_parser("topology", help="dump a latent descriptor grid")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--instrument", type=int, required=True)
    p.add_argument("--pitch", type=int, required=True)
    p.add_argument("--octave", type=int, required=True)
    p.add_argument("--grid", type=int, default=9)
    p.add_argument("--box", type=float, nargs=2, default=(-3.0, 3.0), metavar=("LO", "HI"))
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_topology)


def cmd_topology(args):
    from .checkpoint import load_checkpoint
    from .conditioning import ConditionLabel
    from .evaluation import DESCRIPTOR_NAMES, latent_topology
    from .spectral import mel_filterbank

    ckpt = load_checkpoint(args.ckpt)
    model = ckpt.build_model()
    _, centers = mel_filterbank(ckpt.spectral_config)
    grid = latent_topology(
        model, ckpt.stats, centers, ckpt.spectral_config.floor,
        ConditionLabel(args.pitch, args.octave, args.instrument),
        lo=args.box[0], hi=args.box[1], n=args.grid,
    )
    with open(args.out, "w") as f:
        f.write(
            f"# topology instrument={args.instrument} pitch={args.pitch} "
            f"octave={args.octave} n={args.grid} lo={grid.lo} hi={grid.hi}\n"
        )
        f.write("z0\tz1\tz2\t" + "\t".join(DESCRIPTOR_NAMES) + "\n")
        for i in range(len(grid.points)):
            row = [f"{v:.6g}" for v in grid.points[i]]
            row += [f"{grid.values[name][i]:.6g}" for name in DESCRIPTOR_NAMES]
            f.write("\t".join(row) + "\n")
    print(f"wrote {len(grid.points)} grid points to {args.out}")
    return 0


def _add_transfer(sub):
    p = sub.add_parser("transfer", help="transfer a melody WAV to another instrument")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--source-instr", type=int, required=True)
    p.add_argument("--target-instr", type=int, required=True)
    p.add_argument("--pitch", type=int, default=None)
    p.add_argument("--octave", type=int, default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--gl-iters", type=int, default=60)
    p.set_defaults(func=cmd_transfer)


def cmd_transfer(args):
    from .audio import read_wav, resample_linear, write_wav
    from .checkpoint import load_checkpoint
    from .transfer import TransferRequest, transfer_melody

    ckpt = load_checkpoint(args.ckpt)
    audio = read_wav(args.input)
    if audio.sample_rate != ckpt.spectral_config.sample_rate:
        audio = resample_linear(audio, ckpt.spectral_config.sample_rate)
    out = transfer_melody(
        ckpt.build_model(), ckpt.stats, ckpt.spectral_config, audio,
        TransferRequest(args.source_instr, args.target_instr, args.pitch, args.octave),
        t_chunk=ckpt.config.t_chunk, gl_iterations=args.gl_iters,
    )
    write_wav(args.out, out)
    print(f"wrote transferred audio to {args.out}")
    return 0


def _add_serve(sub):
    p = sub.add_parser("serve", help="serve a checkpoint over HTTP")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", default=None)
    p.add_argument("--port", type=int, default=8080)
    p.add_argument("--host", default="127.0.0.1")
    p.set_defaults(func=cmd_serve)


def cmd_serve(args):
    import uvicorn

    from .checkpoint import checkpoint_hash, load_checkpoint
    from .service import SessionState, create_app

    ckpt = load_checkpoint(args.ckpt)
    dataset = None
    if args.data:
        dataset = _load_split(
            args.data, ckpt.spectral_config, ckpt.seeds.get("data", 0), ckpt.config.t_chunk
        )
    state = SessionState.from_checkpoint(
        ckpt, dataset, content_hash=checkpoint_hash(args.ckpt)
    )
    uvicorn.run(create_app(state), host=args.host, port=args.port)
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="movae", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for add in (_add_synth_data, _add_train, _add_eval, _add_topology, _add_transfer, _add_serve):
        add(sub)
    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
