"""Deterministic synthetic disassembly corpora.

Each sample is a small asm-lite program: an .idata import block, a .text
section with a ``start:`` entry, a main block whose mnemonics follow a
per-family Markov chain, imported API calls woven in at fixed relative
positions, one local subroutine called near the end (holding the last
API of the family motif), forward/backward conditional jumps, occasional
align/comment/blank lines, and a small .data section.  Labels, byte
columns and addresses look like IDA output.

Family signal lives in two layers: the opcode Markov transitions and the
ordered API motif.  In fusion mode (exactly two families) the generator
instead draws two opcode styles (disjoint halves of the opcode alphabet,
each with its own chain) and two API styles (disjoint motifs) and pairs
them XOR fashion: family 1 samples alternate (style 0, style 0) /
(style 1, style 1), family 2 alternates (style 0, style 1) / (style 1,
style 0).  Per-family marginal distributions of either single layer are
identical by construction (exact 50/50 alternation) while the joint
differs, so only fused features separate the families.

The manifest records, per sample, the family, the style bits, and the
API order a control-flow walk from the entry should produce (main-block
APIs in position order, then the subroutine API at its call site).
Identical specs and seeds yield byte-identical corpora.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from ..asmlite import DATA_DIRECTIVES
from ..errors import PipelineError


class IoFailure(PipelineError):
    """Corpus files could not be written."""


DEFAULT_OPCODES = (
    "adc", "add", "and", "cmp", "dec", "imul", "inc", "lea", "mov", "mul",
    "neg", "nop", "not", "or", "pop", "push", "rol", "ror", "sar", "sbb",
    "shl", "shr", "sub", "test", "xchg", "xor",
)

DEFAULT_APIS = (
    "CloseHandle", "CreateFileA", "CreateProcessA", "ExitProcess",
    "GetModuleHandleA", "GetProcAddress", "InternetOpenA", "LoadLibraryA",
    "ReadFile", "RegCloseKey", "RegOpenKeyExA", "RegSetValueExA",
    "Sleep", "VirtualAlloc", "VirtualProtect", "WriteFile",
)

#: mnemonics the generator itself emits structurally; alphabets must avoid
#: them so the opcode stream stays attributable to one source
RESERVED_TOKENS = frozenset(DATA_DIRECTIVES) | {"extrn", "call", "ret", "retn", "proc"}

_OPERAND_POOL = (
    "eax", "ebx", "ecx", "edx", "esi", "edi",
    "eax, ebx", "ecx, edx", "esi, edi", "eax, 1", "ebx, 8", "ecx, 0FFh",
    "dword ptr [ebp+8]", "byte ptr [esi]", "eax, [edi+4]", "",
)

_COMMENT_POOL = ("; ----------------", "; main body", "; check result", "; cleanup")

_TEXT_BASE = 0x401000
_DATA_BASE = 0x403000
_IDATA_BASE = 0x40F000
_MOTIF_LEN = 4


@dataclass(frozen=True)
class SyntheticCorpusSpec:
    families: int = 3
    samples_per_family: int = 40
    seed: int = 0
    fusion_mode: bool = False
    opcode_alphabet: tuple[str, ...] = DEFAULT_OPCODES
    api_alphabet: tuple[str, ...] = DEFAULT_APIS
    min_len: int = 90
    max_len: int = 140


def _validate_spec(spec: SyntheticCorpusSpec) -> None:
    if spec.families < 2:
        raise ValueError("families must be >= 2")
    if spec.fusion_mode and spec.families != 2:
        raise ValueError("fusion_mode corpora use exactly 2 families")
    if spec.samples_per_family < 1:
        raise ValueError("samples_per_family must be >= 1")
    if not (30 <= spec.min_len <= spec.max_len):
        raise ValueError("need 30 <= min_len <= max_len")
    ops = spec.opcode_alphabet
    need_ops = 12 if spec.fusion_mode else 6
    if len(set(ops)) != len(ops) or len(ops) < need_ops:
        raise ValueError(f"opcode alphabet needs >= {need_ops} distinct tokens")
    bad = [t for t in ops if t in RESERVED_TOKENS or t.startswith("j")]
    if bad:
        raise ValueError(f"opcode alphabet collides with reserved tokens: {bad}")
    apis = spec.api_alphabet
    need = _MOTIF_LEN * (2 if spec.fusion_mode else 1)
    if len(set(apis)) != len(apis) or len(apis) < need:
        raise ValueError(f"api alphabet needs >= {need} distinct names")


def _transition(rng: np.random.Generator, n: int) -> np.ndarray:
    """Row-stochastic matrix with two strongly preferred successors per row."""
    mat = np.zeros((n, n))
    for i in range(n):
        pref = rng.choice(n, size=2, replace=False)
        row = np.full(n, 0.3 / (n - 2))
        row[pref] = 0.35
        mat[i] = row / row.sum()
    return mat


def _start_dist(rng: np.random.Generator, n: int) -> np.ndarray:
    sig = rng.choice(n, size=4, replace=False)
    row = np.full(n, 0.5 / (n - 4))
    row[sig] = 0.125
    return row / row.sum()


def _markov(rng, trans, start, alphabet, length) -> list[str]:
    state = int(rng.choice(len(alphabet), p=start))
    seq = [alphabet[state]]
    for _ in range(length - 1):
        state = int(rng.choice(len(alphabet), p=trans[state]))
        seq.append(alphabet[state])
    return seq


def _render_sample(rng, ops_stream_main, ops_stream_sub, motif):
    """Lay out and render one program; returns (text, expected api order)."""
    m = len(ops_stream_main)
    main_apis = list(motif[:-1])
    sub_api = motif[-1]

    inserts: dict[int, list[tuple]] = {}

    def put(pos, item):
        inserts.setdefault(pos, []).append(item)

    for idx, name in enumerate(main_apis):
        put((idx + 1) * m // (len(main_apis) + 1), ("api", name))
    jf = m // 4
    put(jf, ("jmpc", "S1"))
    put(min(jf + 3, m - 1), ("label", "S1"))
    if rng.random() < 0.5:
        put((3 * m) // 5, ("label", "S2"))
        put((4 * m) // 5, ("jmpc", "S2"))
    align_mask = rng.random(m) < 0.06
    comment_mask = rng.random(m) < 0.05
    blank_mask = rng.random(m) < 0.05

    items: list[tuple] = [("label", "start")]
    for idx, op in enumerate(ops_stream_main):
        for extra in inserts.get(idx, ()):
            items.append(extra)
        if align_mask[idx]:
            items.append(("align", None))
        if comment_mask[idx]:
            items.append(("comment", None))
        if blank_mask[idx]:
            items.append(("blank", None))
        items.append(("op", op))
    items.append(("callsub", None))
    items.append(("ret", None))
    items.append(("label", "SUB"))
    for idx, op in enumerate(ops_stream_sub):
        if idx == len(ops_stream_sub) // 2:
            items.append(("api", sub_api))
        items.append(("op", op))
    items.append(("ret", None))

    # address pass
    cursor = _TEXT_BASE
    sym: dict[str, int] = {}
    recs: list[tuple] = []
    for kind, payload in items:
        if kind == "label":
            sym[payload] = cursor
            recs.append((kind, payload, cursor, 0))
        elif kind in ("comment", "blank"):
            recs.append((kind, payload, cursor, 0))
        elif kind == "align":
            recs.append((kind, payload, cursor, 0))
            cursor = (cursor // 16 + 1) * 16
        else:
            advance = int(rng.integers(2, 8))
            recs.append((kind, payload, cursor, advance))
            cursor += advance

    def resolve(name: str) -> str:
        if name == "start":
            return "start"
        if name == "SUB":
            return f"sub_{sym['SUB']:06X}"
        return f"loc_{sym[name]:06X}"

    lines: list[str] = []
    for kind, payload, addr, advance in recs:
        prefix = f".text:{addr:08X} "
        if kind == "label":
            lines.append(prefix + resolve(payload) + ":")
            continue
        if kind == "comment":
            lines.append(prefix + _COMMENT_POOL[int(rng.integers(len(_COMMENT_POOL)))])
            continue
        if kind == "blank":
            lines.append("")
            continue
        if kind == "align":
            lines.append(prefix + "align 10h")
            continue
        if kind == "op":
            operand = _OPERAND_POOL[int(rng.integers(len(_OPERAND_POOL)))]
            content = payload if payload == "nop" or not operand else f"{payload} {operand}"
        elif kind == "api":
            content = f"call ds:{payload}"
        elif kind == "callsub":
            content = f"call {resolve('SUB')}"
        elif kind == "jmpc":
            short = "short " if rng.random() < 0.5 else ""
            content = f"jnz {short}{resolve(payload)}"
        else:  # ret
            content = "ret"
        byte_text = ""
        if rng.random() < 0.5 and advance:
            raw = rng.integers(0, 256, size=min(advance, 4))
            byte_text = " ".join(f"{int(v):02X}" for v in raw) + " "
        lines.append(prefix + byte_text + content)

    lines.append("")
    daddr = _DATA_BASE
    for _ in range(int(rng.integers(2, 5))):
        pick = rng.random()
        if pick < 0.4:
            content = f"db 0{int(rng.integers(0, 256)):02X}h"
            step = 1
        elif pick < 0.8:
            content = f"dd {int(rng.integers(0, 65536))}"
            step = 4
        else:
            content = "db 'payload; data',0"
            step = 16
        lines.append(f".data:{daddr:08X} {content}")
        daddr += step

    lines.append("")
    iaddr = _IDATA_BASE
    for name in motif:
        lines.append(f".idata:{iaddr:08X} extrn {name}:dword")
        iaddr += 4

    text = "\n".join(lines) + "\n"
    return text, main_apis + [sub_api]


def generate_synthetic_corpus(spec: SyntheticCorpusSpec, out_dir) -> dict:
    """Write <id>.asm files, labels.csv, and manifest.json under out_dir.

    Returns the manifest dict.  Raises ValueError on a bad spec and
    IoFailure when files cannot be written.
    """
    _validate_spec(spec)
    out = Path(out_dir)
    rng = np.random.default_rng(spec.seed)
    ops = spec.opcode_alphabet
    apis = spec.api_alphabet
    n_ops = len(ops)

    if spec.fusion_mode:
        chosen = rng.choice(len(apis), size=2 * _MOTIF_LEN, replace=False)
        half = n_ops // 2
        sub_alphabets = (ops[:half], ops[half:])
        styles = []
        for s in range(2):
            motif = tuple(apis[i] for i in chosen[s * _MOTIF_LEN:(s + 1) * _MOTIF_LEN])
            sub = sub_alphabets[s]
            styles.append((_transition(rng, len(sub)), _start_dist(rng, len(sub)), motif, sub))
    else:
        profiles = []
        for _ in range(spec.families):
            motif_idx = rng.choice(len(apis), size=_MOTIF_LEN, replace=False)
            motif = tuple(apis[i] for i in motif_idx)
            profiles.append((_transition(rng, n_ops), _start_dist(rng, n_ops), motif))

    samples = []
    files: dict[str, str] = {}
    for family in range(1, spec.families + 1):
        for i in range(spec.samples_per_family):
            if spec.fusion_mode:
                op_style = i % 2
                api_style = op_style if family == 1 else 1 - op_style
                trans, start, _, alphabet = styles[op_style]
                motif = styles[api_style][2]
            else:
                op_style = api_style = None
                trans, start, motif = profiles[family - 1]
                alphabet = ops
            total = int(rng.integers(spec.min_len, spec.max_len + 1))
            sub_len = int(rng.integers(5, 9))
            main_ops = _markov(rng, trans, start, alphabet, total - sub_len)
            sub_ops = _markov(rng, trans, start, alphabet, sub_len)
            sid = f"{family:02d}_{i:04d}"
            text, api_seq = _render_sample(rng, main_ops, sub_ops, motif)
            files[sid] = text
            samples.append({
                "id": sid,
                "file": f"{sid}.asm",
                "family": family,
                "opcode_style": op_style,
                "api_style": api_style,
                "api_sequence": api_seq,
            })

    manifest = {
        "spec": asdict(spec),
        "samples": samples,
    }
    try:
        out.mkdir(parents=True, exist_ok=True)
        for sid, text in files.items():
            with open(out / f"{sid}.asm", "w", encoding="utf-8", newline="\n") as fh:
                fh.write(text)
        with open(out / "labels.csv", "w", encoding="utf-8", newline="\n") as fh:
            fh.write("Id,Class\n")
            for entry in samples:
                fh.write(f"{entry['id']},{entry['family']}\n")
        with open(out / "manifest.json", "w", encoding="utf-8", newline="\n") as fh:
            fh.write(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        raise IoFailure(f"cannot write corpus under {out}: {exc}") from exc
    return manifest
