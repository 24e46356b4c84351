#!/usr/bin/env python3
"""Export a HuggingFace wav2vec2-style checkpoint to the braintalker format.

The output directory receives:
  wav2vec2.json  architecture description + tensor index
  wav2vec2.bin   float32 row-major tensor blobs, in index order

Only base-style checkpoints are supported: group-norm frontend (norm on the
first conv layer only), no conv bias, post-norm encoder, exact GELU.

  python3 tools/export_wav2vec2.py --model facebook/wav2vec2-base-960h --out dir

--selftest builds a small randomly initialized model instead, exports it, and
additionally writes input.f32 / expected.f32 / meta.json so the C++ test can
check the adapter's forward pass against the reference implementation.
"""

import argparse
import json
import sys
from pathlib import Path


def fail(msg: str) -> None:
    print(f"error: {msg}", file=sys.stderr)
    sys.exit(1)


def expected_layout(cfg: dict):
    """Mirror of Wav2Vec2Model::expected_layout."""
    out = []
    c_in = 1
    for i, (k, _s) in enumerate(cfg["conv_layers"]):
        out.append((f"frontend.conv{i}.w", cfg["conv_dim"], k * c_in))
        if i == 0:
            out.append(("frontend.norm0.gamma", 1, cfg["conv_dim"]))
            out.append(("frontend.norm0.beta", 1, cfg["conv_dim"]))
        c_in = cfg["conv_dim"]
    out.append(("proj.ln.gamma", 1, cfg["conv_dim"]))
    out.append(("proj.ln.beta", 1, cfg["conv_dim"]))
    out.append(("proj.w", cfg["dim"], cfg["conv_dim"]))
    out.append(("proj.b", 1, cfg["dim"]))
    out.append(("pos_conv.w", cfg["dim"], cfg["pos_kernel"] * (cfg["dim"] // cfg["pos_groups"])))
    out.append(("pos_conv.b", 1, cfg["dim"]))
    out.append(("enc.ln.gamma", 1, cfg["dim"]))
    out.append(("enc.ln.beta", 1, cfg["dim"]))
    for i in range(cfg["blocks"]):
        p = f"layer{i}."
        for proj in ("q", "k", "v", "out"):
            out.append((p + f"attn.{proj}.w", cfg["dim"], cfg["dim"]))
            out.append((p + f"attn.{proj}.b", 1, cfg["dim"]))
        out.append((p + "ln1.gamma", 1, cfg["dim"]))
        out.append((p + "ln1.beta", 1, cfg["dim"]))
        out.append((p + "ffn1.w", cfg["ffn_dim"], cfg["dim"]))
        out.append((p + "ffn1.b", 1, cfg["ffn_dim"]))
        out.append((p + "ffn2.w", cfg["dim"], cfg["ffn_dim"]))
        out.append((p + "ffn2.b", 1, cfg["dim"]))
        out.append((p + "ln2.gamma", 1, cfg["dim"]))
        out.append((p + "ln2.beta", 1, cfg["dim"]))
    return out


def gather_tensors(model, cfg: dict, np):
    """Map the HF state dict onto the exchange-format tensor names."""

    def conv_w(weight):
        # torch layout (C_out, C_in, K) -> rows C_out, cols k*C_in + c_in
        w = weight.detach().numpy().astype(np.float64)
        c_out, c_in, k = w.shape
        return np.transpose(w, (0, 2, 1)).reshape(c_out, k * c_in)

    def row(vec):
        return vec.detach().numpy().reshape(1, -1)

    def mat(m):
        return m.detach().numpy()

    sd = dict(model.named_parameters())
    t = {}
    for i in range(len(cfg["conv_layers"])):
        conv = model.feature_extractor.conv_layers[i]
        t[f"frontend.conv{i}.w"] = conv_w(conv.conv.weight)
        if i == 0:
            t["frontend.norm0.gamma"] = row(conv.layer_norm.weight)
            t["frontend.norm0.beta"] = row(conv.layer_norm.bias)
    t["proj.ln.gamma"] = row(model.feature_projection.layer_norm.weight)
    t["proj.ln.beta"] = row(model.feature_projection.layer_norm.bias)
    t["proj.w"] = mat(model.feature_projection.projection.weight)
    t["proj.b"] = row(model.feature_projection.projection.bias)
    # Materialize the weight-normed positional conv weight.
    t["pos_conv.w"] = conv_w(model.encoder.pos_conv_embed.conv.weight)
    t["pos_conv.b"] = row(model.encoder.pos_conv_embed.conv.bias)
    t["enc.ln.gamma"] = row(model.encoder.layer_norm.weight)
    t["enc.ln.beta"] = row(model.encoder.layer_norm.bias)
    for i, layer in enumerate(model.encoder.layers):
        p = f"layer{i}."
        for name, proj in (("q", layer.attention.q_proj), ("k", layer.attention.k_proj),
                           ("v", layer.attention.v_proj), ("out", layer.attention.out_proj)):
            t[p + f"attn.{name}.w"] = mat(proj.weight)
            t[p + f"attn.{name}.b"] = row(proj.bias)
        t[p + "ln1.gamma"] = row(layer.layer_norm.weight)
        t[p + "ln1.beta"] = row(layer.layer_norm.bias)
        t[p + "ffn1.w"] = mat(layer.feed_forward.intermediate_dense.weight)
        t[p + "ffn1.b"] = row(layer.feed_forward.intermediate_dense.bias)
        t[p + "ffn2.w"] = mat(layer.feed_forward.output_dense.weight)
        t[p + "ffn2.b"] = row(layer.feed_forward.output_dense.bias)
        t[p + "ln2.gamma"] = row(layer.final_layer_norm.weight)
        t[p + "ln2.beta"] = row(layer.final_layer_norm.bias)
    del sd
    return t


def export(model, out_dir: Path, np) -> dict:
    hf = model.config
    if hf.feat_extract_norm != "group":
        fail("only group-norm frontends are supported")
    if getattr(hf, "do_stable_layer_norm", False):
        fail("only post-norm encoders are supported")
    if getattr(hf, "conv_bias", False):
        fail("only bias-free frontend convolutions are supported")
    if hf.hidden_act != "gelu":
        fail(f"unsupported activation {hf.hidden_act!r}")
    conv_dims = list(hf.conv_dim)
    if len(set(conv_dims)) != 1:
        fail("only uniform frontend channel widths are supported")

    cfg = {
        "conv_dim": conv_dims[0],
        "dim": hf.hidden_size,
        "blocks": hf.num_hidden_layers,
        "heads": hf.num_attention_heads,
        "ffn_dim": hf.intermediate_size,
        "pos_kernel": hf.num_conv_pos_embeddings,
        "pos_groups": hf.num_conv_pos_embedding_groups,
        "conv_layers": [[int(k), int(s)] for k, s in zip(hf.conv_kernel, hf.conv_stride)],
    }

    tensors = gather_tensors(model, cfg, np)
    layout = expected_layout(cfg)
    index = []
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "wav2vec2.bin", "wb") as blob:
        for name, rows, cols in layout:
            arr = np.asarray(tensors[name], dtype=np.float64)
            if arr.shape != (rows, cols):
                fail(f"tensor {name}: shape {arr.shape}, expected ({rows}, {cols})")
            blob.write(np.ascontiguousarray(arr, dtype=np.float32).tobytes())
            index.append({"name": name, "rows": rows, "cols": cols})
    with open(out_dir / "wav2vec2.json", "w") as f:
        json.dump({"format": "braintalker-w2v2-v1", "config": cfg, "tensors": index}, f, indent=1)
    return cfg


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--model", help="HF checkpoint id or local path")
    ap.add_argument("--out", required=True, help="output directory")
    ap.add_argument("--selftest", action="store_true",
                    help="export a small random model plus a reference input/output pair")
    args = ap.parse_args()

    import numpy as np
    import torch
    from transformers import Wav2Vec2Config, Wav2Vec2Model

    out_dir = Path(args.out)
    if args.selftest:
        torch.manual_seed(7)
        hf_cfg = Wav2Vec2Config(
            conv_dim=(24, 24, 24), conv_stride=(5, 2, 2), conv_kernel=(10, 3, 3),
            num_feat_extract_layers=3, hidden_size=32, num_hidden_layers=2,
            num_attention_heads=4, intermediate_size=48,
            num_conv_pos_embeddings=16, num_conv_pos_embedding_groups=4,
            do_stable_layer_norm=False, feat_extract_norm="group", hidden_act="gelu",
        )
        model = Wav2Vec2Model(hf_cfg).eval()
        cfg = export(model, out_dir, np)
        rng = np.random.RandomState(123)
        wave = (rng.randn(800) * 0.5).astype(np.float32)
        with torch.no_grad():
            out = model(torch.from_numpy(wave)[None, :]).last_hidden_state[0].numpy()
        wave.tofile(out_dir / "input.f32")
        out.astype(np.float32).tofile(out_dir / "expected.f32")
        with open(out_dir / "meta.json", "w") as f:
            json.dump({"samples": int(wave.size), "frames": int(out.shape[0]),
                       "dim": int(out.shape[1])}, f)
        print(f"selftest export: {out.shape[0]} x {out.shape[1]} reference written to {out_dir}")
        return

    if not args.model:
        fail("--model is required unless --selftest is given")
    model = Wav2Vec2Model.from_pretrained(args.model).eval()
    cfg = export(model, out_dir, np)
    print(f"exported {args.model}: dim={cfg['dim']}, blocks={cfg['blocks']} -> {out_dir}")


if __name__ == "__main__":
    main()
