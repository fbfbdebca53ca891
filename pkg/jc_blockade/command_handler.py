import logging
import math

import numpy as np

from . import four_level
from .config_service import ConfigService, Scenario
from .correlations import MIN_EXCITATION, CorrelationSeries, detuning_scan, g2_cross, g2_forward, get_engine, h_theta, waiting_time
from .estimators import click_statistics, operational_reference, sample_h_operational
from .manifest_service import ManifestService
from .master_equation import build_liouvillian, default_delay_grid, propagate, steady_state
from .operators import (
    ATOM_GROUND,
    basis_state,
    build_cavity_ops,
    expect,
    fock_state_cavity,
    ket_to_dm,
    partial_trace_atom,
    quadrature_operator,
)
from .phase_space import default_grid, marginal, quadrature_distribution, wigner
from .series_io import marginal_text, record_text, series_text, table_text, wigner_text
from .tomography import free_decay_tomography
from .trajectory_engine import run_ensemble, run_trajectory

logger = logging.getLogger("jc_blockade")

# task -> 处理方法名
TASKS = {
    "steady": "steady",
    "correlate": "correlate",
    "fourlevel": "fourlevel",
    "trajectory": "trajectory",
    "ensemble": "ensemble",
    "wigner": "wigner",
    "tomography": "tomography",
    "scan": "scan",
}


class CommandHandler:
    """命令处理服务类，每个任务一个方法；产物统一经 ManifestService 写出，返回单行摘要。"""

    def __init__(self, scenario: Scenario, manifest: ManifestService, service: ConfigService | None = None):
        """初始化命令处理服务。

        Args:
            scenario: 已校验的场景
            manifest: 产物清单服务
            service: 配置服务，用于单位换算
        """
        self.scenario = scenario
        self.manifest = manifest
        self.service = service or ConfigService()
        self.params = self.service.to_system_params(scenario)
        self.header = scenario.echo()
        self.fmt = scenario.format

    def dispatch(self) -> str:
        handler = getattr(self, TASKS[self.scenario.task])
        logger.info(f"开始任务 {self.scenario.task}")
        return handler()

    def _emit(self, name: str, text: str, kind: str):
        return self.manifest.write_text(name, text, kind)

    def _write_series(self, name: str, series: CorrelationSeries):
        return self._emit(f"{name}.{self.fmt}", series_text(series, self.fmt, self.header), "series")

    def _write_table(self, name: str, columns: dict, metadata: dict | None = None, kind: str = "table"):
        meta = dict(metadata or {}, scenario=self.header)
        return self._emit(f"{name}.{self.fmt}", table_text(columns, meta, self.fmt), kind)

    def _tau_grid(self, span: float, points: int) -> np.ndarray:
        return default_delay_grid(self.params, span, points)

    def steady(self) -> str:
        """稳态摘要：⟨a†a⟩、g²(0)、⟨A_π/4⟩、⟨σ₊σ₋⟩ 与截断标志。"""
        p = self.params
        engine = get_engine(p)
        quadrature = expect(quadrature_operator(p.n_max, math.pi / 4.0), engine.rho_ss).real
        g2_zero = engine.g2_zero() if engine.n_ss > MIN_EXCITATION else float("nan")
        columns = {
            "photon_number": np.array([engine.n_ss]),
            "g2_zero": np.array([g2_zero]),
            "quadrature_pi_4": np.array([quadrature]),
            "atom_excitation": np.array([engine.s_ss]),
            "truncation_flag": np.array([int(engine.truncation_flag)]),
        }
        self._write_table("steady", columns)
        return (
            f"n_ss={engine.n_ss:.4f} g2(0)={g2_zero:.4f} A_pi/4={quadrature:.4f} "
            f"s_ss={engine.s_ss:.4f} truncation={bool(engine.truncation_flag)}"
        )

    def correlate(self) -> str:
        """回归公式关联函数：g2、g2ab、htheta、wait。"""
        cfg = self.scenario.section("correlate")
        p, kind, method = self.params, cfg["kind"], cfg["method"]
        full = self._tau_grid(cfg["tau_span"], cfg["tau_points"])
        if kind == "g2":
            # 首行即 g²(0)
            taus = np.linspace(0.0, full[-1], full.size // 2 + 1)
            series = g2_forward(p, taus, method)
            summary = f"g2(0)={series.values[0]:.4f} g2(τ_max)={series.values[-1]:.4f}"
        elif kind == "g2ab":
            series = g2_cross(p, full, method)
            summary = (
                f"g2_AB(0+)={series.at_zero('+'):.4f} g2_AB(0-)={series.at_zero('-'):.4f} "
                f"max|g(τ)-g(-τ)|={series.max_branch_difference():.3e}"
            )
        elif kind == "htheta":
            series = h_theta(p, cfg["theta"], full, method)
            if cfg["normalization"] != "raw":
                series = series.normalized(cfg["normalization"])
            summary = f"H_theta(0+)={series.at_zero('+'):.4f} asymmetry={series.asymmetry():.3e}"
        else:
            series = waiting_time(p, cfg["channel"], method=method)
            summary = f"mass={series.metadata['mass']:.4f} mean={series.metadata['mean']:.4f}"
        self._write_series(kind, series)
        return f"{kind}: {summary}"

    def fourlevel(self) -> str:
        """四能级有效模型：参数、解析 g²_AB、共振极限与数值对比。"""
        cfg = self.scenario.section("fourlevel")
        action = cfg["action"]
        p = self.params
        taus = np.linspace(-cfg["tau_span"], cfg["tau_span"], cfg["tau_points"]) / p.kappa
        if action == "params":
            fp = four_level.effective_params(p)
            columns = {
                "omega": np.array([fp.omega]),
                "nu": np.array([fp.nu]),
                "gamma31": np.array([fp.gamma31]),
                "gamma32": np.array([fp.gamma32]),
                "cascade_ratio": np.array([fp.cascade_ratio]),
                "p3": np.array([fp.p3]),
                "photon_number": np.array([fp.photon_number_ss]),
                "g2_ab_zero": np.array([four_level.g2_ab_zero(fp)]),
            }
            self._write_table("fourlevel_params", columns)
            return f"Ω={fp.omega:.5f} ν={fp.nu:.4f} Γ31/Γ32={fp.cascade_ratio:.3f} g2_AB(0)={columns['g2_ab_zero'][0]:.4f}"
        if action == "g2ab":
            fp = four_level.effective_params(p)
            values = np.asarray(four_level.g2_ab_analytic(fp, taus))
            series = CorrelationSeries(taus, values, "g2_AB", "raw", metadata={"omega": fp.omega, "nu": fp.nu})
            self._write_series("fourlevel_g2ab", series)
            return f"g2_AB(0)={four_level.g2_ab_zero(fp):.4f}"
        if action == "resonant":
            gamma = p.gamma if p.gamma > 0.0 else p.kappa
            g = cfg["g_over_gamma"] * gamma
            step = math.pi / (20.0 * g)
            points = max(cfg["tau_points"], int(math.ceil(2.0 * cfg["tau_span"] / (gamma * step))) + 1)
            grid = np.linspace(-cfg["tau_span"], cfg["tau_span"], points | 1) / gamma
            exact = four_level.g2_ab_resonant(g, gamma, grid)
            approx = four_level.g2_ab_resonant(g, gamma, grid, approximate=True)
            tau_peak, peak = four_level.resonant_peak(g, gamma)
            meta = {"g": g, "gamma": gamma, "peak_tau": tau_peak, "peak_value": peak, "peak_estimate": (2.0 * g / gamma) ** 2}
            self._write_table("fourlevel_resonant", {"tau": grid, "exact": exact, "approximate": approx}, meta)
            return f"peak={peak:.2f} at τ={tau_peak:.5f} (2g/γ)²={(2.0 * g / gamma) ** 2:.2f}"
        pairs = four_level.compare(p, taus)
        self._write_table("fourlevel_compare", pairs)
        gap = float(np.max(np.abs(pairs["analytic"] - pairs["numeric"])))
        return f"max|analytic-numeric|={gap:.4f}"

    def trajectory(self) -> str:
        """单条轨迹（run）或 wave_particle 记录上的操作性 H_θ 采样（sample-h）。"""
        p = self.params
        cfg = self.service.unraveling_config(self.scenario, p)
        record = run_trajectory(p, cfg)
        self._emit("trajectory.txt", record_text(record), "record")
        counts = record.counts()
        summary = f"{cfg.scheme}: cavity={counts['cavity']} spontaneous={counts['spontaneous']} T={record.duration:.3f}"
        if self.scenario.get("trajectory.action") != "sample-h":
            return summary

        tr = self.scenario.section("trajectory")
        taus = np.linspace(-tr["sample_tau_span"], tr["sample_tau_span"], tr["sample_tau_points"]) / p.kappa
        sampled = sample_h_operational(record, taus)
        reference = operational_reference(p, cfg.theta, cfg.r, cfg.bandwidth, taus)
        meta = dict(sampled.metadata, theta=cfg.theta)
        self._write_table("sample_h", {"tau": taus, "sampled": sampled.values, "reference": reference.values}, meta)
        deviation = float(np.max(np.abs(sampled.values - reference.values)) / sampled.metadata["noise_scale"])
        return f"{summary} N_s={sampled.metadata['n_samples']} max_dev/noise={deviation:.2f}"

    def ensemble(self) -> str:
        """轨迹系综与主方程传播在检查点上的对比。"""
        p = self.params
        cfg = self.service.unraveling_config(self.scenario, p)
        ens = self.scenario.section("ensemble")
        checkpoints = np.linspace(0.0, cfg.n_steps * cfg.dt, ens["checkpoints"] + 1)
        result = run_ensemble(p, cfg, n_trajectories=ens["n_trajectories"], checkpoints=checkpoints, keep_records=True)

        a, a_dag = build_cavity_ops(p.n_max)
        rho0 = ket_to_dm(basis_state(0, ATOM_GROUND, p.n_max))
        reference = propagate(build_liouvillian(p), rho0, result.checkpoint_times)
        columns = result.columns()
        columns["photon_me"] = reference.expect(a_dag @ a).real
        columns["quadrature_me"] = reference.expect(quadrature_operator(p.n_max, cfg.theta)).real
        self._write_table("ensemble", columns, {"n_trajectories": result.n_trajectories})

        stats = click_statistics(result.records)
        clicks = {
            "trajectory": np.arange(result.n_trajectories),
            "cavity": result.click_counts["cavity"],
            "spontaneous": result.click_counts["spontaneous"],
        }
        self._write_table("ensemble_clicks", clicks, stats.to_dict(), kind="clicks")
        se = np.where(result.photon_se > 0.0, result.photon_se, np.inf)
        worst = float(np.max(np.abs(result.photon_mean - columns["photon_me"]) / se))
        return f"N={result.n_trajectories} clicks={result.total_clicks()} max|Δn|/SE={worst:.2f}"

    def _cavity_state(self, section: str) -> np.ndarray:
        cfg = self.scenario.section(section)
        p = self.params
        if cfg["state"] == "steady":
            return partial_trace_atom(steady_state(build_liouvillian(p)))
        n = cfg["fock_n"] if cfg["state"] == "fock" else 0
        return ket_to_dm(fock_state_cavity(n, p.n_max))

    def wigner(self) -> str:
        """腔模 Wigner 函数网格与 θ 方向的边缘分布。"""
        cfg = self.scenario.section("wigner")
        rho_cav = self._cavity_state("wigner")
        grid = wigner(rho_cav, default_grid(cfg["extent"], cfg["points"]))
        m = marginal(grid, cfg["theta"])
        self._emit(f"wigner.{self.fmt}", wigner_text(grid, self.fmt, self.header), "wigner")
        self._emit(f"marginal.{self.fmt}", marginal_text(m, self.fmt, self.header), "marginal")
        return f"norm={grid.normalization():.6f} min={grid.min_value():.4f} var_theta={m.variance():.4f}"

    def tomography(self) -> str:
        """自由衰减层析直方图及其与精确边缘分布的 L1 距离。"""
        cfg = self.scenario.section("tomography")
        rho_cav = self._cavity_state("tomography")
        hist = free_decay_tomography(
            rho_cav,
            cfg["theta"],
            cfg["n_samples"],
            self.scenario.seed,
            params=self.params.with_(eps_d=0.0, g=0.0),
            dt=cfg["dt"] / self.params.kappa,
            bins=cfg["bins"],
        )
        l1 = hist.l1_distance(lambda q: quadrature_distribution(rho_cav, cfg["theta"], q))
        meta = {"theta": hist.theta, "mean": hist.mean(), "variance": hist.variance(), "l1": l1, "n_samples": hist.samples.size}
        columns = {"left": hist.edges[:-1], "right": hist.edges[1:], "density": hist.density}
        self._write_table("tomography", columns, meta, kind="histogram")
        return f"mean={hist.mean():.4f} var={hist.variance():.4f} L1={l1:.4f}"

    def scan(self) -> str:
        """失谐扫描：稳态光子数与 g²(0)。"""
        cfg = self.scenario.section("scan")
        p = self.params
        sign = self.scenario.get("params.detuning_sign")
        magnitudes = np.linspace(cfg["detuning_from"], cfg["detuning_to"], cfg["points"])
        result = detuning_scan(p, sign * magnitudes * p.g)
        columns = result.columns()
        columns["detuning"] = magnitudes
        self._write_table("scan", columns, {"detuning_sign": sign})
        k = int(np.argmax(result.photon_number))
        return f"peak n_ss={result.photon_number[k]:.4f} at |Δω_d|/g={magnitudes[k]:.5f}"

    def presets(self) -> str:
        """列出命名预设。"""
        return "\n".join(f"{name}: {description}" for name, description in self.service.describe_presets())
