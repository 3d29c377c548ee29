"""Stage I annotation plus R rounds of self-training with refinement."""
from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field

import numpy as np

from .active_select import select_active_nodes
from .annotate import AnnotationCache, BudgetLedger, annotate_batch, post_filter
from .evalio import Dataset, all_metrics
from .gnn_engine import GnnHyper, ensemble_predictions, predict, train_gnn
from .refine import refine_labels
from .rewire import (
    EncoderHyper, apply_rewiring, candidate_pairs, plan_rewiring, predict_rewired, train_encoder,
)
from .sample_select import select_informative

log = logging.getLogger(__name__)


class InsufficientSeeds(RuntimeError):
    """Post-filtering left no Stage-I training nodes."""


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class LlmSettings:
    base_url: str = "https://api.openai.com/v1"
    model: str = "gpt-3.5-turbo"
    temperature: float = 0.0
    timeout: float = 60.0
    max_retries: int = 3
    backoff_base: float = 1.0
    task_preamble: str | None = None
    item_label: str = "Target Paper"
    class_explanations: tuple[str, ...] | None = None
    max_text_tokens: int = 4096


@dataclass(frozen=True)
class PipelineConfig:
    # defaults follow the Cora / GCN hyperparameter row
    B: int = 350
    epsilon: float = 0.5
    R: int = 5
    T: int = 2
    alpha: float = 1.0
    tau: int = 128
    K: int | None = None
    decompose: str = "H"
    quota_certain: int | None = None
    delta_minus: float = 0.1
    delta_plus: float = 0.05
    phi_bar: float = 3.0
    phi_bar_mode: str = "rank"
    invert_ranks: bool = False
    lam: float = 5e-5
    ensemble_alpha: float | None = None
    reverse_ensemble: bool = False
    use_rewiring: bool = True
    weighted_rewire: bool = False
    max_candidates_per_node: int | None = None
    n_consistency: int = 1
    min_confidence: float = 0.0
    max_in_flight: int = 1
    seed: int = 0
    gnn: GnnHyper = field(default_factory=GnnHyper)
    # the rewired model sees only k-dim class probabilities and underfits in the
    # backbone's 20 epochs; None reuses ``gnn``
    rewired_gnn: GnnHyper | None = field(default_factory=lambda: GnnHyper(epochs=100))
    encoder: EncoderHyper = field(default_factory=EncoderHyper)
    llm: LlmSettings = field(default_factory=LlmSettings)

    def __post_init__(self):
        if not 0 < self.epsilon <= 1:
            raise ConfigError(f"epsilon must lie in (0, 1], got {self.epsilon}")
        if self.R < 2:
            raise ConfigError(f"R must be >= 2, got {self.R}")
        if self.B < 1:
            raise ConfigError(f"B must be positive, got {self.B}")
        if self.K is not None and not 1 <= self.K <= self.B:
            raise ConfigError(f"K must lie in [1, B], got {self.K}")
        for name in ("delta_minus", "delta_plus", "min_confidence", "lam"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be nonnegative")
        if self.alpha <= 0 or (self.ensemble_alpha is not None and self.ensemble_alpha <= 0):
            raise ConfigError("alpha must be positive")
        if self.phi_bar_mode not in ("rank", "score"):
            raise ConfigError(f"phi_bar_mode must be 'rank' or 'score', got {self.phi_bar_mode!r}")
        if self.decompose not in ("H", "X"):
            raise ConfigError(f"decompose must be 'H' or 'X', got {self.decompose!r}")
        if self.n_consistency < 1 or self.max_in_flight < 1:
            raise ConfigError("n_consistency and max_in_flight must be >= 1")
        if self.quota_certain is not None and self.quota_certain < 0:
            raise ConfigError("quota_certain must be nonnegative")

    @property
    def B_ini(self) -> int:
        return int(np.floor(self.epsilon * self.B + 1e-9))

    @property
    def B_ref(self) -> int:
        return self.B - self.B_ini

    def uncertain_quotas(self) -> list[int]:
        """Per-round query quotas for rounds 1..R-1; remainders go to the
        earliest rounds."""
        base, rem = divmod(self.B_ref, self.R - 1)
        return [base + (1 if r < rem else 0) for r in range(self.R - 1)]

    def certain_quota(self) -> int:
        if self.quota_certain is not None:
            return self.quota_certain
        base = self.B_ref // (self.R - 1)
        return base if base > 0 else self.B_ini // (self.R - 1)

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["lambda"] = out.pop("lam")
        if out["llm"]["class_explanations"] is not None:
            out["llm"]["class_explanations"] = list(out["llm"]["class_explanations"])
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "PipelineConfig":
        """Strict constructor: unknown keys raise :class:`ConfigError`."""
        data = dict(data)
        if "lambda" in data:
            data["lam"] = data.pop("lambda")
        nested = {"gnn": GnnHyper, "rewired_gnn": GnnHyper, "encoder": EncoderHyper, "llm": LlmSettings}
        top = {f.name for f in dataclasses.fields(cls)}
        for key in data:
            if key not in top:
                raise ConfigError(f"unknown config key {key!r}")
        for key, typ in nested.items():
            if data.get(key) is not None:
                sub = data[key]
                if not isinstance(sub, dict):
                    raise ConfigError(f"config key {key!r} must be an object")
                allowed = {f.name for f in dataclasses.fields(typ)}
                for k in sub:
                    if k not in allowed:
                        raise ConfigError(f"unknown config key {key}.{k!r}")
                if key == "llm" and sub.get("class_explanations") is not None:
                    sub = {**sub, "class_explanations": tuple(sub["class_explanations"])}
                try:
                    data[key] = typ(**sub)
                except (TypeError, ValueError) as exc:
                    raise ConfigError(f"{key}: {exc}") from exc
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc


@dataclass
class RoundState:
    round: int
    train_nodes: dict[int, int]
    history: list[np.ndarray]
    budget_spent: int
    log: dict = field(default_factory=dict)


@dataclass
class PipelineResult:
    final_labels: np.ndarray
    report: dict
    train_labels: dict[int, int]
    Y_hat: np.ndarray


def derived_seed(seed: int, *keys: int) -> int:
    return int(np.random.SeedSequence([int(seed), *keys]).generate_state(1)[0])


_SELECT, _GNN, _ENCODER, _REWIRED = range(4)


def _rewired_predictions(g, Y_r, train, cfg: PipelineConfig, k: int, r: int):
    nodes = np.array(sorted(train), dtype=np.int64)
    labels = np.array([train[v] for v in nodes], dtype=np.int64)
    g_hat = g
    stats = {"removed": 0, "added": 0}
    if cfg.use_rewiring and (cfg.delta_minus > 0 or cfg.delta_plus > 0):
        cands = None
        if cfg.delta_plus > 0:
            cands, _ = candidate_pairs(g, nodes, Y_r, cfg.max_candidates_per_node)
        if g.num_edges or (cands is not None and len(cands)):
            enc_hyper = dataclasses.replace(cfg.encoder, seed=derived_seed(cfg.seed, r, _ENCODER))
            enc = train_encoder(g, Y_r, cfg.lam, enc_hyper, candidates=cands)
            plan = plan_rewiring(g, enc.embed(Y_r), nodes, cfg.delta_minus, cfg.delta_plus,
                                 cfg.max_candidates_per_node)
            g_hat = apply_rewiring(g, plan, weighted=cfg.weighted_rewire)
            stats = {"removed": int(len(plan.remove)), "added": int(len(plan.add)),
                     "encoder_loss": [enc.loss_history[0], enc.loss_history[-1]]}
    base = cfg.rewired_gnn if cfg.rewired_gnn is not None else cfg.gnn
    hyper = dataclasses.replace(base, seed=derived_seed(cfg.seed, r, _REWIRED))
    Y_hat = predict_rewired(g_hat, Y_r, nodes, labels, hyper, num_classes=k)
    return Y_hat, stats


def run_pipeline(dataset: Dataset, annotator, config: PipelineConfig,
                 cache: AnnotationCache | None = None) -> PipelineResult:
    cfg = config
    g, X = dataset.graph, dataset.features
    k = dataset.num_classes
    K = cfg.K if cfg.K is not None else k
    B_ini = cfg.B_ini
    if not K <= B_ini <= g.n:
        raise ConfigError(f"need K <= floor(epsilon*B) <= n, got K={K}, B_ini={B_ini}, n={g.n}")
    truth = dataset.ground_truth
    ledger = BudgetLedger(cfg.B)
    tau = min(cfg.tau, g.n, X.shape[1])
    warnings = []
    if tau != cfg.tau:
        warnings.append(f"tau clamped from {cfg.tau} to {tau}")

    # Stage I
    sel = select_active_nodes(g, X, T=cfg.T, alpha=cfg.alpha, tau=tau, K=K, B_ini=B_ini,
                              seed=derived_seed(cfg.seed, 0, _SELECT), decompose=cfg.decompose)
    anns = annotate_batch(annotator, sel.members, ledger, n_consistency=cfg.n_consistency,
                          cache=cache, max_in_flight=cfg.max_in_flight)
    kept = post_filter(anns, cfg.min_confidence)
    if not kept:
        raise InsufficientSeeds(f"post-filter kept none of {len(anns)} Stage-I annotations")
    train = {a.node_id: int(a.label) for a in kept}
    stage1 = {
        "selected": len(sel.members),
        "centers": sel.centers,
        "failed": sum(a.failed for a in anns),
        "kept": len(kept),
        "queries": ledger.used,
    }
    if truth is not None:
        stage1["annotation_accuracy"] = float(np.mean([truth[v] == y for v, y in train.items()]))

    ens_alpha = cfg.ensemble_alpha if cfg.ensemble_alpha is not None else cfg.alpha
    quotas_u = cfg.uncertain_quotas()
    quota_c = cfg.certain_quota()
    history: list[np.ndarray] = []
    rounds = []
    Y_hat = None
    for r in range(1, cfg.R + 1):
        nodes = np.array(sorted(train), dtype=np.int64)
        labels = np.array([train[v] for v in nodes], dtype=np.int64)
        hyper = dataclasses.replace(cfg.gnn, seed=derived_seed(cfg.seed, r, _GNN))
        model = train_gnn(g, X, nodes, labels, hyper, num_classes=k)
        Y_r = predict(model, g, X)
        history.append(Y_r)
        Ybar = ensemble_predictions(history, ens_alpha, cfg.reverse_ensemble)
        entry = {"round": r, "train_size": len(train)}
        if truth is not None:
            entry["metrics"] = all_metrics(np.argmax(Ybar, axis=1), truth, k)
            entry["train_label_accuracy"] = float(np.mean(truth[nodes] == labels))
            entry["round_accuracy"] = float(np.mean(np.argmax(Y_r, axis=1) == truth))
        if r == cfg.R:
            Y_hat, stats = _rewired_predictions(g, Y_r, train, cfg, k, r)
            entry["rewire"] = stats
            if truth is not None:
                entry["rewired_accuracy"] = float(np.mean(np.argmax(Y_hat, axis=1) == truth))
            rounds.append(entry)
            break

        pool = np.setdiff1d(np.arange(g.n), nodes)
        q_u = min(quotas_u[r - 1], ledger.remaining)
        res = select_informative(g, Ybar, pool, quota_c, q_u)
        warnings.extend(f"round {r}: {w}" for w in res.warnings)
        refined = []
        stats = {"removed": 0, "added": 0}
        if res.uncertain:
            ut_anns = annotate_batch(annotator, res.uncertain, ledger,
                                     n_consistency=cfg.n_consistency, cache=cache,
                                     max_in_flight=cfg.max_in_flight)
            Y_hat, stats = _rewired_predictions(g, Y_r, train, cfg, k, r)
            if truth is not None:
                entry["rewired_accuracy"] = float(np.mean(np.argmax(Y_hat, axis=1) == truth))
            refined = refine_labels(res.uncertain, ut_anns, Y_hat, cfg.phi_bar,
                                    mode=cfg.phi_bar_mode, invert_ranks=cfg.invert_ranks)
        pseudo = np.argmax(Ybar, axis=1)
        for v in res.certain:
            train[v] = int(pseudo[v])
        for item in refined:
            train[item.node_id] = item.label
        entry.update({
            "quotas": {"certain": quota_c, "uncertain": q_u},
            "selected": {"certain": len(res.certain), "uncertain": len(res.uncertain)},
            "refinement": {
                "llm_kept": sum(x.source == "llm" for x in refined),
                "gnn_overridden": sum(x.source == "gnn_refined" for x in refined),
            },
            "rewire": stats,
            "budget_used": ledger.used,
        })
        if truth is not None and refined:
            entry["refined_label_accuracy"] = float(np.mean([truth[x.node_id] == x.label for x in refined]))
        rounds.append(entry)
        log.info("round %d: train=%d certain=%d uncertain=%d", r, len(train),
                 len(res.certain), len(res.uncertain))

    final = np.argmax(Y_hat, axis=1).astype(np.int64)
    for v, y in train.items():
        final[v] = y
    report = {
        "config": cfg.to_dict(),
        "budget": {"cap": cfg.B, "used": ledger.used, "B_ini": B_ini, "B_ref": cfg.B_ref,
                   "llm_calls": int(getattr(annotator, "calls", 0))},
        "stage1": stage1,
        "rounds": rounds,
        "warnings": warnings,
    }
    if truth is not None:
        test = np.setdiff1d(np.arange(g.n), np.fromiter(train, dtype=np.int64))
        report["final_metrics"] = all_metrics(final, truth, k)
        if len(test):
            report["test_metrics"] = all_metrics(final[test], truth[test], k)
    return PipelineResult(final, report, train, Y_hat)
