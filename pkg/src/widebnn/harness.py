"""Experiment sweeps: run cells, persist chains, emit diagnostic CSVs."""

import csv
import hashlib
import io
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import diagnostics
from .data import load_cifar10, synthetic_regression
from .errors import ConfigError
from .network import NetworkConfig
from .posterior import FULL_PHI, PosteriorTarget
from .samplers import SamplerConfig, run_chain

RHAT_FRACTIONS = (0.25, 0.5, 0.75, 1.0)


@dataclass(frozen=True)
class ExperimentPlan:
    samplers: tuple = ("pcn",)
    widths: tuple = (128, 512, 2048)
    betas: tuple = (0.1,)
    steps: int = 50_000
    burn_in: int = 5_000
    thin: int = 25
    n: int = 64
    data_path: str = ""  # CIFAR-10 batch file; empty selects synthetic data
    synthetic_m: int = 8
    synthetic_k: int = 1
    data_seed: int = 0
    seeds: tuple = (0, 1, 2)
    n_chains_per_cell: int = 1
    mode: str = FULL_PHI
    noise_sigma: float = 0.1
    activation: str = "gelu"
    sigma_w2: float = 2.0
    sigma_b2: float = 0.01
    readout_sigma_w2: float = 1.0
    n_components: int = 2
    checkpoint_every: int = 0
    out_dir: str = "results"
    workers: int = 1
    strict: bool = False

    def __post_init__(self):
        for name in ("samplers", "widths", "betas", "seeds"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if not self.samplers or not self.widths or not self.betas or not self.seeds:
            raise ConfigError("sweep axes must be non-empty")
        if self.n_chains_per_cell < 1:
            raise ConfigError("n_chains_per_cell must be >= 1")

    def hash(self):
        blob = json.dumps(asdict(self), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def cells(self):
        for sampler in self.samplers:
            for width in self.widths:
                for beta in self.betas:
                    for seed in self.seeds:
                        yield Cell(sampler, int(width), float(beta), int(seed))


@dataclass(frozen=True)
class Cell:
    sampler: str
    width: int
    beta: float
    seed: int

    @property
    def tag(self):
        return f"{self.sampler}_w{self.width}_b{self.beta:g}_s{self.seed}"


def build_dataset(plan):
    if plan.data_path:
        return load_cifar10(plan.data_path, plan.n, plan.data_seed)
    return synthetic_regression(plan.n, plan.synthetic_m, plan.synthetic_k, plan.data_seed)


def build_target(plan, width, dataset):
    config = NetworkConfig(
        input_dim=dataset.m,
        hidden_widths=(width,),
        output_dim=dataset.k,
        activation=plan.activation,
        sigma_w=(np.sqrt(plan.sigma_w2), np.sqrt(plan.readout_sigma_w2)),
        sigma_b=(np.sqrt(plan.sigma_b2), np.sqrt(plan.sigma_b2)),
        include_bias=True,
    )
    return PosteriorTarget(
        config=config,
        dataset=dataset,
        noise_var=plan.noise_sigma**2,
        mode=plan.mode,
    )


def _atomic_write(path, text):
    tmp = f"{path}.tmp"
    with open(tmp, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _csv_text(header, rows):
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def _file_hash(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        h.update(fh.read())
    return h.hexdigest()[:16]


def run_cell(plan, cell, resume=False):
    """Run one sweep cell (possibly several chains) and return its artifacts."""
    dataset = build_dataset(plan)
    target = build_target(plan, cell.width, dataset)
    chains = []
    for chain_idx in range(plan.n_chains_per_cell):
        cfg = SamplerConfig(
            kind=cell.sampler,
            beta=cell.beta,
            steps=plan.steps,
            burn_in=plan.burn_in,
            thin=plan.thin,
            seed=cell.seed,
            checkpoint_every=plan.checkpoint_every,
        )
        ckpt = (
            os.path.join(plan.out_dir, f"ckpt_{cell.tag}_c{chain_idx}.npz")
            if plan.checkpoint_every
            else None
        )
        rng = np.random.default_rng(np.random.SeedSequence((cell.seed, chain_idx)))
        init = rng.standard_normal(target.dim)
        chains.append(
            run_chain(
                target,
                cfg,
                init=init,
                rng=rng,
                checkpoint_path=ckpt,
                resume=resume and ckpt is not None and os.path.exists(ckpt),
            )
        )
    return chains


def _cell_outputs(plan, cell, chains, out_dir):
    """Diagnostics and file bodies derived from one cell's chains."""
    main = chains[0]
    ess = diagnostics.ess(main.samples)
    traces = diagnostics.pc_traces(main.samples, plan.n_components)

    rhat_rows, rhat_mean, rhat_sd = [], "", ""
    if len(chains) >= 2:
        for frac in RHAT_FRACTIONS:
            upto = max(2, int(round(frac * main.samples.shape[0])))
            gr = diagnostics.gelman_rubin([c.samples[:upto] for c in chains])
            rhat_rows.append(
                [plan.burn_in + upto * plan.thin, f"{gr.mean:.6g}", f"{gr.sd:.6g}"]
            )
        full = diagnostics.gelman_rubin([c.samples for c in chains])
        rhat_mean, rhat_sd = f"{full.mean:.6g}", f"{full.sd:.6g}"

    files = {}
    files[f"acceptance_{cell.tag}.csv"] = _csv_text(
        ["window", "acceptance_rate"],
        [[i, f"{r:.6g}"] for i, r in enumerate(main.acceptance_series)],
    )
    comp_header = ["sample"] + [f"pc{i + 1}" for i in range(traces.projections.shape[1])]
    files[f"trace_{cell.tag}.csv"] = _csv_text(
        comp_header,
        [
            [i] + [f"{v:.6g}" for v in row]
            for i, row in enumerate(traces.projections)
        ],
    )
    if rhat_rows:
        files[f"rhat_{cell.tag}.csv"] = _csv_text(["steps", "rhat_mean", "rhat_sd"], rhat_rows)

    chain_path = os.path.join(out_dir, f"chain_{cell.tag}.npz")
    tmp = f"{chain_path}.tmp"
    with open(tmp, "wb") as fh:
        np.savez(
            fh,
            samples=main.samples,
            acceptance_series=main.acceptance_series,
            meta=np.frombuffer(
                json.dumps(
                    {
                        "cell": asdict(cell),
                        "acceptance_count": main.acceptance_count,
                        "proposal_count": main.proposal_count,
                        "wall_time": main.wall_time,
                    }
                ).encode(),
                dtype=np.uint8,
            ),
        )
    os.replace(tmp, chain_path)

    row = [
        cell.sampler,
        cell.width,
        f"{cell.beta:g}",
        cell.seed,
        plan.steps,
        f"{main.acceptance_rate:.6g}",
        f"{ess.mean_per_step:.6g}",
        f"{ess.min_per_step:.6g}",
        f"{ess.max_per_step:.6g}",
        rhat_mean,
        rhat_sd,
        f"{main.wall_time:.3f}",
    ]
    return row, files, chain_path


RESULTS_HEADER = [
    "sampler",
    "width",
    "beta",
    "seed",
    "steps",
    "acceptance_rate",
    "mean_per_step_ess",
    "min_per_step_ess",
    "max_per_step_ess",
    "rhat_mean",
    "rhat_sd",
    "wall_time",
]


def _run_cell_task(plan, cell, resume=False):
    return cell, run_cell(plan, cell, resume=resume)


def run_plan(plan, resume=False):
    """Execute the sweep; returns 0 on success and 1 on partial failure."""
    os.makedirs(plan.out_dir, exist_ok=True)
    if not os.access(plan.out_dir, os.W_OK):
        raise IOError(f"output directory {plan.out_dir} is not writable")

    cells = list(plan.cells())
    results = {}
    failures = {}
    workers = 1 if plan.strict else max(1, plan.workers)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = {pool.submit(_run_cell_task, plan, c, resume): c for c in cells}
            for fut, cell in futures.items():
                try:
                    results[cell] = fut.result()[1]
                except Exception as exc:  # noqa: BLE001 - cell isolation
                    failures[cell.tag] = repr(exc)
    else:
        for cell in cells:
            try:
                results[cell] = run_cell(plan, cell, resume=resume)
            except Exception as exc:  # noqa: BLE001 - cell isolation
                failures[cell.tag] = repr(exc)

    rows = []
    outputs = {}
    for cell in cells:
        if cell not in results:
            continue
        row, files, chain_path = _cell_outputs(plan, cell, results[cell], plan.out_dir)
        rows.append(row)
        chain_hash = _file_hash(chain_path)
        for name, text in files.items():
            _atomic_write(os.path.join(plan.out_dir, name), text)
            outputs[name] = {"inputs": [os.path.basename(chain_path)], "input_hash": chain_hash}
        outputs[os.path.basename(chain_path)] = {"inputs": ["plan"], "input_hash": plan.hash()}

    results_name = "results.csv"
    _atomic_write(
        os.path.join(plan.out_dir, results_name), _csv_text(RESULTS_HEADER, rows)
    )
    outputs[results_name] = {
        "inputs": sorted(n for n in outputs if n.startswith("chain_")),
        "input_hash": plan.hash(),
    }

    manifest = {
        "plan": asdict(plan),
        "plan_hash": plan.hash(),
        "seeds": list(plan.seeds),
        "outputs": outputs,
        "failures": failures,
    }
    _atomic_write(
        os.path.join(plan.out_dir, "manifest.json"), json.dumps(manifest, indent=2)
    )
    return 1 if failures else 0


def diagnose(out_dir, n_components=2):
    """Recompute results.csv and trace CSVs from stored chain files."""
    rows = []
    for name in sorted(os.listdir(out_dir)):
        if not (name.startswith("chain_") and name.endswith(".npz")):
            continue
        with np.load(os.path.join(out_dir, name)) as data:
            samples = data["samples"]
            meta = json.loads(bytes(data["meta"]).decode())
        cell = meta["cell"]
        summary = diagnostics.ess(samples)
        traces = diagnostics.pc_traces(samples, n_components)
        tag = Cell(**cell).tag
        header = ["sample"] + [f"pc{i + 1}" for i in range(traces.projections.shape[1])]
        _atomic_write(
            os.path.join(out_dir, f"trace_{tag}.csv"),
            _csv_text(
                header,
                [[i] + [f"{v:.6g}" for v in r] for i, r in enumerate(traces.projections)],
            ),
        )
        rows.append(
            [
                cell["sampler"],
                cell["width"],
                f"{cell['beta']:g}",
                cell["seed"],
                "",
                f"{meta['acceptance_count'] / max(meta['proposal_count'], 1):.6g}",
                f"{summary.mean_per_step:.6g}",
                f"{summary.min_per_step:.6g}",
                f"{summary.max_per_step:.6g}",
                "",
                "",
                f"{meta['wall_time']:.3f}",
            ]
        )
    _atomic_write(os.path.join(out_dir, "results.csv"), _csv_text(RESULTS_HEADER, rows))
    return 0


def emit_plot_data(out_dir):
    """Tidy per-figure CSVs from results.csv; missing cells stay empty."""
    path = os.path.join(out_dir, "results.csv")
    with open(path) as fh:
        reader = csv.DictReader(fh)
        rows = list(reader)

    keys = sorted({(r["sampler"], int(r["width"]), r["beta"]) for r in rows})

    def cell_rows(key):
        return [
            r
            for r in rows
            if (r["sampler"], int(r["width"]), r["beta"]) == key
        ]

    acc_rows, ess_rows = [], []
    for sampler, width, beta in keys:
        group = cell_rows((sampler, width, beta))
        acc = [float(r["acceptance_rate"]) for r in group if r["acceptance_rate"]]
        acc_rows.append(
            [sampler, width, beta, f"{np.mean(acc):.6g}" if acc else ""]
        )
        mean_e = [float(r["mean_per_step_ess"]) for r in group if r["mean_per_step_ess"]]
        min_e = [float(r["min_per_step_ess"]) for r in group if r["min_per_step_ess"]]
        max_e = [float(r["max_per_step_ess"]) for r in group if r["max_per_step_ess"]]
        ess_rows.append(
            [
                sampler,
                width,
                beta,
                f"{np.mean(mean_e):.6g}" if mean_e else "",
                f"{np.min(min_e):.6g}" if min_e else "",
                f"{np.max(max_e):.6g}" if max_e else "",
            ]
        )

    _atomic_write(
        os.path.join(out_dir, "fig_acceptance.csv"),
        _csv_text(["sampler", "width", "beta", "acceptance_rate"], acc_rows),
    )
    _atomic_write(
        os.path.join(out_dir, "fig_ess.csv"),
        _csv_text(
            ["sampler", "width", "beta", "mean_per_step_ess", "min_per_step_ess", "max_per_step_ess"],
            ess_rows,
        ),
    )
    return 0
