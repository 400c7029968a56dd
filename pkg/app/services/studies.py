"""
스터디 실행기

설정의 스윕 파라미터 (토러스 한 변 또는 1/ε) 마다 실현을 작업자에게 나눠 풀고, 실현 인덱스 순서로
집계해 study.csv, summary.json, run.log, errors.jsonl 을 씁니다. 실현 결과는 result_store 에
캐시되어 중단 후 재실행해도 같은 파일이 만들어집니다.

- rve:       ā_{L,N}, Q_{L,N} (+ 잭나이프, 앞부분 N 표준오차, 계통 오차 보고, Var ā_L 기울기)
- gk:        Q_{2L} 토러스 위 창 함수 Green-Kubo 추정 (+ 같은 실현의 RVE 추정과 비교)
- clt:       J0, J1, J2 의 분산 (CLT 정규화 하에서 평탄성)
- pathwise:  I1, I2, E₀ 와 경로별 항등식 차이 (E₀ 의 L² 크기 감소율)
- normality: L^{d/2}(ā_L,11 - 평균) 의 Kolmogorov / Wasserstein 거리
- moments:   φ, ∇φ, σ 의 2차 모멘트 크기 (∇φ 는 L_max / L_min 비로 균일 유계 확인)
"""
import json
import logging
import math
from functools import partial
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from app.models.experiment import ExperimentConfig, VerifyReport
from app.models.lattice import EdgeField, TorusGrid
from app.models.law import ConductanceLaw, SeedSpec
from app.models.solver import SolveConfig, SolveRecord
from app.models.stats import RateCorrection, RveEstimate, ScalingFit, StudyPoint, StudyResult, TestFunction
from app.modules.elliptic_solver import solve_variable
from app.modules.lattice import forward_gradient
from app.modules.logging import RunLogger
from app.modules.random_fields import sample_field
from app.modules.worker_pool import RealizationOutcome, run_realizations
from app.services import oracles
from app.services.correctors import build_pack, pack_commutator
from app.services.functionals import corrector_functionals, j0_functional, solution_functionals
from app.services.green_kubo import estimate_from_moments, realization_moments
from app.services.normality import normality_report
from app.services.result_store import cache_key, result_store
from app.services.rve import (
    abar_task,
    commutator_means,
    estimate_from_abars,
    nested_prefix_estimates,
    rve_q_from_commutators,
    systematic_error_report,
)
from app.services.scaling import scaling_fit
from app.services.verification import identity_verifier
from app.settings import SRC_LOG_LEVELS
from app.utils.exceptions import HomogenizationError, InsufficientSamples
from app.utils.logger import study_logging
from app.utils.naming import git_describe, study_name

logger = logging.getLogger(__name__)
logger.setLevel(SRC_LOG_LEVELS["SERVICE"])

# summary.json 에 기록하지 않는 실행 전용 설정 (결과에 영향이 없음)
EXECUTION_KEYS = {"workers", "out", "cache"}

# moments 스터디가 실현별로 남기는 양
MOMENT_QUANTITIES = ("phi2", "grad_phi2", "sigma2")
# |∇φ|² 평균의 L_max / L_min 비 허용 구간
GRAD_MOMENT_RATIO_BOUNDS = (0.8, 1.25)


def _plain(obj: Any) -> Any:
    """numpy 값을 포함한 트리를 JSON 으로 쓸 수 있는 값으로"""
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if hasattr(obj, "model_dump"):
        return _plain(obj.model_dump())
    return obj


def _mean_with_error(x: np.ndarray) -> Tuple[float, float]:
    x = np.asarray(x, dtype=np.float64)
    if x.size < 2:
        return float(x.mean()) if x.size else float("nan"), float("nan")
    return float(x.mean()), float(x.std(ddof=1) / math.sqrt(x.size))


def _variance_with_error(x: np.ndarray) -> Tuple[float, float]:
    """표본 분산과 그 표준오차 ((x - x̄)² 평균의 표준오차)"""
    x = np.asarray(x, dtype=np.float64)
    if x.size < 3:
        return float("nan"), float("nan")
    dev2 = (x - x.mean()) ** 2
    var = float(dev2.sum() / (x.size - 1))
    return var, float(dev2.std(ddof=1) / math.sqrt(x.size))


#####################################
## 실현 작업 (작업자에서 실행)
#####################################

def _field(d: int, L: int, law: ConductanceLaw, master_seed: int, index: int,
           purpose: str = "field") -> Tuple[EdgeField, SeedSpec]:
    seed = SeedSpec(master_seed=master_seed, realization_index=index, purpose=purpose)
    return sample_field(TorusGrid(d=d, L=L), law, seed), seed


def gk_task(L: int, d: int, law: ConductanceLaw, master_seed: int, cfg: SolveConfig,
            abar_ref: Optional[np.ndarray], index: int) -> RealizationOutcome:
    """한 변 2L 토러스에서 Ξ 의 창 가중 모멘트 (설정된 ā_ref 와 실현별 ā_L 두 가지)"""
    a, seed = _field(d, 2 * L, law, master_seed, index)
    pack = build_pack(a, cfg, with_flux_corrector=False, seed=seed)
    own_W, own_mu = realization_moments(pack_commutator(pack), L)
    if abar_ref is None:
        W, mu = own_W, own_mu
    else:
        W, mu = realization_moments(pack_commutator(pack, abar_ref), L)
    payload = {"abar": np.array(pack.abar), "W": W, "mu": mu, "W_own": own_W, "mu_own": own_mu}
    return RealizationOutcome(index=index, payload=payload, records=pack.reports)


def clt_task(n: int, d: int, law: ConductanceLaw, master_seed: int, cfg: SolveConfig,
             abar_ref: Optional[np.ndarray], F: TestFunction, index: int) -> RealizationOutcome:
    """ε = 1/n 에서 J0, J1, J2"""
    a, seed = _field(d, n, law, master_seed, index)
    pack = build_pack(a, cfg, with_flux_corrector=False, seed=seed)
    eps = 1.0 / n
    ref = pack.abar if abar_ref is None else abar_ref
    j1, j2 = corrector_functionals(pack, F, eps, ref)
    payload = {
        "J0": j0_functional(pack_commutator(pack, ref), F, eps),
        "J1": j1,
        "J2": j2,
        "J0_own": j0_functional(pack_commutator(pack), F, eps),
    }
    return RealizationOutcome(index=index, payload=payload, records=pack.reports)


def pathwise_task(n: int, d: int, law: ConductanceLaw, master_seed: int, cfg: SolveConfig,
                  abar_ref: Optional[np.ndarray], f: TestFunction, box: int, index: int) -> RealizationOutcome:
    """ε = 1/n, 토러스 한 변 box·n 에서 해 기반 범함수 (설정된 ā_ref 와 실현별 ā_L)"""
    # 상자 크기마다 독립된 필드 스트림
    a, seed = _field(d, box * n, law, master_seed, index, "field" if box == 1 else f"field_box{box}")
    pack = build_pack(a, cfg, with_flux_corrector=False, seed=seed)
    eps = 1.0 / n
    records: List[SolveRecord] = list(pack.reports)
    U, report = solve_variable(a, f.vector_field(a.grid, box) * eps, cfg)
    records.append(SolveRecord(purpose="solution", **report.model_dump()))

    functionals = partial(solution_functionals, a, f, f, eps, cfg=cfg, pack=pack, solution=U, box=box)
    own = functionals(pack.abar)
    conf = own if abar_ref is None else functionals(abar_ref)
    payload = {
        "i1_raw": conf.i1_raw,
        "i2_raw": conf.i2_raw,
        "e0_flux_raw": conf.e0_flux_raw,
        "e0_xi": conf.e0_xi,
        "pathwise_discrepancy": conf.pathwise_discrepancy,
        "e0_flux_raw_own": own.e0_flux_raw,
        "e0_xi_own": own.e0_xi,
        "pathwise_discrepancy_own": own.pathwise_discrepancy,
    }
    return RealizationOutcome(index=index, payload=payload, records=records)


def moments_task(L: int, d: int, law: ConductanceLaw, master_seed: int, cfg: SolveConfig,
                 index: int) -> RealizationOutcome:
    """공간 평균한 φ², |∇φ|², σ² (j < k 성분)"""
    a, seed = _field(d, L, law, master_seed, index)
    pack = build_pack(a, cfg, with_flux_corrector=True, seed=seed)
    phi2 = float(np.mean([np.mean(p.values ** 2) for p in pack.phi]))
    grad_phi2 = float(np.mean([np.mean(np.sum(forward_gradient(p).values ** 2, axis=1)) for p in pack.phi]))
    pairs = [(i, j, k) for i in range(d) for j in range(d) for k in range(j + 1, d)]
    sigma2 = float(np.mean([np.mean(pack.sigma_field(i, j, k).values ** 2) for i, j, k in pairs])) if pairs else 0.0
    payload = {"phi2": phi2, "grad_phi2": grad_phi2, "sigma2": sigma2}
    return RealizationOutcome(index=index, payload=payload, records=pack.reports)


#####################################
## 실행기
#####################################

class StudyRunner:
    """
    스터디 한 번을 실행하고 결과 파일을 씁니다.

    작업자는 상태가 없고, 코디네이터 (이 객체) 만 캐시와 기록 파일에 씁니다.
    """

    def __init__(self, config: ExperimentConfig):
        self.config = config
        self.cfg = config.solver
        self.build = git_describe()
        self.name = study_name(config.kind, config.d, config.sides, config.N, config.law.tag(), self.build)
        self.directory = Path(config.out) / self.name
        self.run_logger = RunLogger(self.directory)
        self.rows: List[Dict[str, Any]] = []
        self.points: List[StudyPoint] = []
        self.extras: Dict[str, Any] = {}
        self.realized: Dict[str, int] = {}
        result_store.initialize(Path(config.out) / "cache", enabled=config.cache)

    #####################################
    ## 공통
    #####################################

    def _run_cached(self, task: Callable[[int], RealizationOutcome], key: Callable[[int], str],
                    indices: Sequence[int]) -> List[RealizationOutcome]:
        """캐시에 없는 실현만 묶음 단위로 풀고 저장한 뒤 인덱스 순서의 결과를 돌려줍니다."""
        indices = list(indices)
        outcomes: Dict[int, RealizationOutcome] = {}
        missing = []
        for i in indices:
            cached = result_store.get(key(i))
            if cached is None:
                missing.append(i)
            else:
                outcomes[i] = cached
        if len(missing) < len(indices):
            logger.info(f"캐시 재사용: {len(indices) - len(missing)} / {len(indices)} 실현")

        batch = max(1, self.config.workers) * 8
        for start in range(0, len(missing), batch):
            for outcome in run_realizations(task, missing[start:start + batch], self.config.workers):
                result_store.put(key(outcome.index), outcome)
                outcomes[outcome.index] = outcome
        return [outcomes[i] for i in indices]

    def _collect(self, parameter: Any, outcomes: Sequence[RealizationOutcome]) -> List[RealizationOutcome]:
        """풀이 기록과 실패를 실현 순서로 기록하고 성공한 결과만 돌려줍니다."""
        good = []
        for outcome in outcomes:
            self.run_logger.log_solves(outcome.index, parameter, outcome.records)
            if outcome.ok:
                good.append(outcome)
            else:
                details = {k: v for k, v in outcome.error.items() if k != "type"}
                details["parameter"] = parameter
                self.run_logger.log_error(outcome.error["type"], details, outcome.index)
        self.realized[str(parameter)] = len(good)
        if len(good) < len(outcomes):
            logger.warning(f"파라미터 {parameter}: 실현 {len(outcomes) - len(good)} 개 실패, {len(good)} 개 사용")
        return good

    def _abars(self, L: int, purpose: str = "field", count: Optional[int] = None) -> List[RealizationOutcome]:
        c = self.config
        task = partial(abar_task, L, c.d, c.law, c.master_seed, self.cfg, purpose=purpose)
        key = lambda i: cache_key("abar", c.master_seed, i, L, c.d, c.law, self.cfg, purpose=purpose)
        return self._run_cached(task, key, range(count or c.N))

    def _reference(self) -> Optional[np.ndarray]:
        """설정된 ā_ref (per_realization 이면 None)"""
        c = self.config
        if c.abar_ref == "fixed":
            ref = np.asarray(c.abar_fixed, dtype=np.float64)
        elif c.abar_ref == "per_realization":
            self.extras["abar_ref"] = {"mode": "per_realization"}
            return None
        else:
            side = c.resolved_pilot_side()
            good = self._collect(f"pilot{side}", self._abars(side, "pilot", c.pilot_samples))
            if len(good) < 2:
                raise InsufficientSamples("파일럿 RVE 에 성공한 실현이 부족합니다", required=2, got=len(good))
            ref = np.mean(np.stack([o.payload["abar"] for o in good]), axis=0)
            logger.info(f"파일럿 ā_ref (L={side}, N={len(good)}): {ref.tolist()}")
        self.extras["abar_ref"] = {"mode": c.abar_ref, "matrix": ref}
        return ref

    def _fit(self, correction: Optional[RateCorrection] = None) -> Optional[ScalingFit]:
        if len(self.points) < 3:
            return None
        try:
            return scaling_fit(self.points, correction)
        except (HomogenizationError, ValueError) as e:
            logger.warning(f"스케일링 피팅 생략: {e}")
            self.extras["fit_error"] = str(e)
            return None

    #####################################
    ## 스터디 종류별
    #####################################

    def _rve(self):
        c = self.config
        estimates = []
        for L in c.sides:
            good = self._collect(L, self._abars(L))
            used = [o.index for o in good]
            for o in good:
                self.rows.append({"parameter": L, "realization": o.index,
                                  **{f"abar_{i + 1}{j + 1}": float(o.payload["abar"][i, j])
                                     for i in range(c.d) for j in range(c.d)}})
            try:
                abars = np.stack([o.payload["abar"] for o in good]) if good else np.zeros((0, c.d, c.d))
                estimate = estimate_from_abars(abars, L, c.master_seed, used,
                                               sorted(set(range(c.N)) - set(used)))
            except InsufficientSamples as e:
                self.extras[str(L)] = {"error": str(e)}
                continue
            estimates.append(estimate)

            mean_gradients = np.stack([o.payload["mean_gradient"] for o in good])
            xi_means = commutator_means(abars, mean_gradients, estimate.abar)
            deviation = float(np.max(np.abs(rve_q_from_commutators(xi_means, L) - estimate.Q)))
            entry: Dict[str, Any] = {"estimate": estimate, "commutator_form_deviation": deviation}
            if c.nested:
                entry["nested"] = nested_prefix_estimates(abars, L, c.nested)
            if c.d == 1:
                entry["oracle"] = self._one_dimensional_oracle(estimate)
            self.extras[str(L)] = entry
            # Var(ā_L,11) = Q_1111 / L^d
            volume = float(L) ** c.d
            self.points.append(StudyPoint(parameter=L, statistic=float(estimate.Q[0, 0, 0, 0]) / volume,
                                          error=float(estimate.Q_se[0, 0, 0, 0]) / volume))
        self.extras["systematic_error"] = systematic_error_report(estimates)
        return self._fit()

    def _one_dimensional_oracle(self, estimate: RveEstimate) -> Dict[str, Any]:
        """d=1 닫힌 형태와의 z 점수. two_point 법칙이면 유한 L 의 정확한 E[ā_L] 과도 비교합니다."""
        law = self.config.law
        abar, abar_se = float(estimate.abar[0, 0]), float(estimate.abar_se[0, 0])
        q, q_se = estimate.q_component(0, 0, 0, 0)

        def z(value, exact, se):
            return (value - exact) / se if se > 0 else float("nan")

        q_exact, abar_exact = oracles.expected_q(law), oracles.expected_abar(law)
        oracle = {"abar": abar_exact, "Q": q_exact,
                  "abar_z": z(abar, abar_exact, abar_se), "Q_z": z(q, q_exact, q_se)}
        if law.kind == "two_point":
            finite = oracles.expected_abar_finite(law, estimate.L)
            oracle.update({"abar_L": finite, "abar_L_z": z(abar, finite, abar_se)})
        return oracle

    def _gk(self):
        c = self.config
        ref = self._reference()
        ref_key = None if ref is None else ref.tolist()
        for L in c.sides:
            task = partial(gk_task, L, c.d, c.law, c.master_seed, self.cfg, ref)
            key = lambda i, L=L: cache_key("gk", c.master_seed, i, 2 * L, c.d, c.law, self.cfg, abar_ref=ref_key)
            good = self._collect(L, self._run_cached(task, key, range(c.N)))
            for o in good:
                self.rows.append({"parameter": L, "realization": o.index,
                                  "abar_11": float(o.payload["abar"][0, 0]),
                                  "xi_mean_11": float(o.payload["mu"][0]),
                                  "window_11_11": float(o.payload["W"][0, 0])})
            grid = TorusGrid(d=c.d, L=2 * L)
            try:
                gk = estimate_from_moments([(o.payload["W"], o.payload["mu"]) for o in good], grid, L)
                gk_own = estimate_from_moments([(o.payload["W_own"], o.payload["mu_own"]) for o in good], grid, L)
                abars = np.stack([o.payload["abar"] for o in good])
                rve = estimate_from_abars(abars, 2 * L, c.master_seed, [o.index for o in good])
            except InsufficientSamples as e:
                self.extras[str(L)] = {"error": str(e)}
                continue
            difference = float(gk.Q[0, 0, 0, 0] - rve.Q[0, 0, 0, 0])
            combined = math.hypot(float(gk.Q_se[0, 0, 0, 0]), float(rve.Q_se[0, 0, 0, 0]))
            self.extras[str(L)] = {
                "green_kubo": gk,
                "green_kubo_per_realization": gk_own,
                "rve_same_torus": rve,
                "agreement": {"difference": difference, "combined_error": combined,
                              "within": bool(abs(difference) <= combined)},
            }
            self.points.append(StudyPoint(parameter=L, statistic=float(gk.Q[0, 0, 0, 0]),
                                          error=float(gk.Q_se[0, 0, 0, 0])))
        return self._fit()

    def _clt(self):
        c = self.config
        ref = self._reference()
        ref_key = None if ref is None else ref.tolist()
        F = c.tensor_function
        variances = []
        for n in c.sides:
            eps = 1.0 / n
            task = partial(clt_task, n, c.d, c.law, c.master_seed, self.cfg, ref, F)
            key = lambda i, n=n: cache_key("clt", c.master_seed, i, n, c.d, c.law, self.cfg,
                                           abar_ref=ref_key, F=F.model_dump())
            good = self._collect(n, self._run_cached(task, key, range(c.N)))
            for o in good:
                self.rows.append({"parameter": n, "epsilon": eps, "realization": o.index,
                                  **{name: float(o.payload[name]) for name in ("J0", "J1", "J2", "J0_own")}})
            entry = {}
            for name in ("J0", "J1", "J2", "J0_own"):
                values = np.array([o.payload[name] for o in good])
                var, var_se = _variance_with_error(values)
                mean, mean_se = _mean_with_error(values)
                entry[name] = {"variance": var, "variance_se": var_se, "mean": mean, "mean_se": mean_se}
            self.extras[str(n)] = entry
            variances.append(entry["J0"]["variance"])
            self.points.append(StudyPoint(parameter=eps, statistic=entry["J0"]["variance"],
                                          error=entry["J0"]["variance_se"]))
        ratios = [b / a if a > 0 else float("nan") for a, b in zip(variances, variances[1:])]
        self.extras["variance_ratios"] = ratios
        self.extras["plateau"] = bool(ratios) and all(abs(r - 1.0) < 0.25 for r in ratios)
        return self._fit()

    def _pathwise_columns(self, n: int, box: int, ref: Optional[np.ndarray],
                          parameter: Any) -> Optional[Dict[str, np.ndarray]]:
        """한 (ε, 상자) 조합의 실현별 범함수 열 (I1, I2, E0 는 표본 평균으로 중심화)"""
        c = self.config
        ref_key = None if ref is None else ref.tolist()
        f = c.vector_function
        task = partial(pathwise_task, n, c.d, c.law, c.master_seed, self.cfg, ref, f, box)
        key = lambda i: cache_key("pathwise", c.master_seed, i, n, c.d, c.law, self.cfg,
                                  abar_ref=ref_key, f=f.model_dump(), box=box)
        good = self._collect(parameter, self._run_cached(task, key, range(c.N)))
        if len(good) < 3:
            self.extras[str(parameter)] = {"error": f"성공한 실현이 {len(good)} 개뿐입니다"}
            return None
        col = {name: np.array([o.payload[name] for o in good]) for name in good[0].payload}
        col["index"] = np.array([o.index for o in good])
        # 기댓값 대신 스터디 표본 평균으로 중심화
        col["I1"] = col["i1_raw"] - col["i1_raw"].mean()
        col["I2"] = col["i2_raw"] - col["i2_raw"].mean()
        col["E0"] = (col["e0_flux_raw"] - col["e0_flux_raw"].mean()) - col["e0_xi"]
        col["E0_own"] = (col["e0_flux_raw_own"] - col["e0_flux_raw_own"].mean()) - col["e0_xi_own"]
        return col

    def _truncation(self, n: int, col: Dict[str, np.ndarray], ref: Optional[np.ndarray]) -> Optional[Dict]:
        """같은 ε 에서 상자를 두 배로 늘려 Var(I1) 의 상대 변화를 잽니다."""
        c = self.config
        doubled_box = 2 * c.box
        doubled = self._pathwise_columns(n, doubled_box, ref, f"{n}@box{doubled_box}")
        if doubled is None:
            return None
        var, se = _variance_with_error(col["I1"])
        var2, se2 = _variance_with_error(doubled["I1"])
        change = (var2 - var) / var if var > 0 else float("nan")
        error_bar = math.hypot(se, se2) / var if var > 0 else float("nan")
        flagged = bool(abs(change) > error_bar)
        if flagged:
            logger.warning(f"ε=1/{n}: 상자 {c.box} → {doubled_box} 에서 Var(I1) 상대 변화 {change:.4f} "
                           f"가 오차 막대 {error_bar:.4f} 보다 큽니다")
        return {
            "box": c.box, "doubled_box": doubled_box,
            "i1_variance": var, "i1_variance_se": se,
            "i1_variance_doubled": var2, "i1_variance_doubled_se": se2,
            "relative_change": change, "error_bar": error_bar, "flagged": flagged,
        }

    def _pathwise(self):
        c = self.config
        ref = self._reference()
        flagged = []
        for n in c.sides:
            eps = 1.0 / n
            col = self._pathwise_columns(n, c.box, ref, n)
            if col is None:
                continue
            I1, I2, E0, E0_own = col["I1"], col["I2"], col["E0"], col["E0_own"]
            for k, index in enumerate(col["index"]):
                self.rows.append({
                    "parameter": n, "epsilon": eps, "realization": int(index),
                    "I1": float(I1[k]), "I2": float(I2[k]), "E0": float(E0[k]), "E0_own": float(E0_own[k]),
                    **{name: float(col[name][k]) for name in ("i1_raw", "i2_raw", "e0_flux_raw", "e0_xi",
                                                              "pathwise_discrepancy")},
                })

            norm2, norm2_se = _mean_with_error(E0 ** 2)
            norm = math.sqrt(norm2)
            own_norm2, _ = _mean_with_error(E0_own ** 2)
            e0_mean, e0_mean_se = _mean_with_error(E0)
            self.extras[str(n)] = {
                "e0_l2": norm,
                "e0_l2_own": math.sqrt(own_norm2),
                "e0_mean": e0_mean,
                "e0_mean_se": e0_mean_se,
                "e0_centered_consistent": bool(abs(e0_mean) <= 2.0 * e0_mean_se),
                "i1_variance": _variance_with_error(I1)[0],
                "i2_variance": _variance_with_error(I2)[0],
                "max_pathwise_discrepancy": float(np.max(col["pathwise_discrepancy"])),
                "max_pathwise_discrepancy_own": float(np.max(col["pathwise_discrepancy_own"])),
            }
            if c.truncation_doubling:
                truncation = self._truncation(n, col, ref)
                if truncation is not None:
                    self.extras[str(n)]["truncation"] = truncation
                    flagged.append(truncation["flagged"])
            self.points.append(StudyPoint(parameter=eps, statistic=norm,
                                          error=norm2_se / (2.0 * norm) if norm > 0 else 0.0))
        if c.truncation_doubling:
            self.extras["truncation_flagged"] = any(flagged)
        return self._fit(RateCorrection(kind="mu_d", d=c.d, power=0.5, inverse=True))

    def _normality(self):
        c = self.config
        deltas = []
        for L in c.sides:
            good = self._collect(L, self._abars(L))
            a11 = np.array([o.payload["abar"][0, 0] for o in good])
            samples = float(L) ** (c.d / 2.0) * (a11 - a11.mean()) if a11.size else a11
            for o, s in zip(good, samples):
                self.rows.append({"parameter": L, "realization": o.index,
                                  "abar_11": float(o.payload["abar"][0, 0]), "scaled": float(s)})
            try:
                report = normality_report(samples, c.bootstrap,
                                          SeedSpec(master_seed=c.master_seed, realization_index=L))
            except HomogenizationError as e:
                self.extras[str(L)] = {"error": f"{type(e).__name__}: {e}"}
                continue
            deltas.append(report.delta)
            error = 0.5 * (report.delta_ci[1] - report.delta_ci[0]) if report.delta_ci else 0.0
            self.extras[str(L)] = {"report": report, "delta": report.delta}
            self.points.append(StudyPoint(parameter=L, statistic=report.delta, error=error))
        self.extras["monotone_decreasing"] = bool(len(deltas) >= 2 and all(b < a for a, b in zip(deltas, deltas[1:])))
        return self._fit()

    def _gradient_moment_ratio(self) -> None:
        """가장 큰 L 과 가장 작은 L 의 |∇φ|² 평균 비 (L 에 대해 균일 유계여야 함)"""
        sides = [L for L in self.config.sides if "grad_phi2" in self.extras.get(str(L), {})]
        if len(sides) < 2:
            return
        lo, hi = min(sides), max(sides)
        small, large = self.extras[str(lo)], self.extras[str(hi)]
        ratio = error = float("nan")
        if small["grad_phi2"] > 0 and large["grad_phi2"] > 0:
            ratio = large["grad_phi2"] / small["grad_phi2"]
            # 델타 방법 (두 평균은 독립 실현)
            error = ratio * math.hypot(large["grad_phi2_se"] / large["grad_phi2"],
                                       small["grad_phi2_se"] / small["grad_phi2"])
        bounded = bool(GRAD_MOMENT_RATIO_BOUNDS[0] <= ratio <= GRAD_MOMENT_RATIO_BOUNDS[1])
        self.extras["grad_phi2_ratio"] = {"L_min": lo, "L_max": hi, "ratio": ratio, "error": error,
                                          "bounds": list(GRAD_MOMENT_RATIO_BOUNDS), "bounded": bounded}
        if not bounded:
            logger.warning(f"|∇φ|² 비 (L={hi} / L={lo}) = {ratio:.4f} 가 {GRAD_MOMENT_RATIO_BOUNDS} 밖입니다")

    def _moments(self):
        c = self.config
        sigma_points = []
        for L in c.sides:
            task = partial(moments_task, L, c.d, c.law, c.master_seed, self.cfg)
            key = lambda i, L=L: cache_key("moments", c.master_seed, i, L, c.d, c.law, self.cfg,
                                           quantities=list(MOMENT_QUANTITIES))
            good = self._collect(L, self._run_cached(task, key, range(c.N)))
            for o in good:
                self.rows.append({"parameter": L, "realization": o.index,
                                  **{name: o.payload[name] for name in MOMENT_QUANTITIES}})
            entry = {}
            for name in MOMENT_QUANTITIES:
                entry[name], entry[f"{name}_se"] = _mean_with_error([o.payload[name] for o in good])
            self.extras[str(L)] = entry
            self.points.append(StudyPoint(parameter=L, statistic=entry["phi2"], error=entry["phi2_se"]))
            sigma_points.append(StudyPoint(parameter=L, statistic=entry["sigma2"], error=entry["sigma2_se"]))

        self._gradient_moment_ratio()

        # d=2 에서 φ, σ 의 2차 모멘트는 μ_d(L) 만큼 커짐 (보정 후 기울기 ≈ 0)
        correction = RateCorrection(kind="mu_d", d=c.d)
        if c.d > 1 and len(sigma_points) >= 3:
            saved, self.points = self.points, sigma_points
            self.extras["sigma_fit"] = self._fit(correction)
            self.points = saved
        return self._fit(correction)

    #####################################
    ## 출력
    #####################################

    def _echo(self) -> Dict[str, Any]:
        return self.config.model_dump(mode="json", exclude=EXECUTION_KEYS)

    def _write(self, result: StudyResult) -> None:
        frame = pd.DataFrame(self.rows)
        frame.to_csv(self.directory / "study.csv", index=False, float_format="%.17g")
        summary = {
            "study": self.name,
            "build": self.build,
            "config": self._echo(),
            "result": _plain(result.model_dump()),
        }
        with open(self.directory / "summary.json", "w", encoding="utf-8") as f:
            json.dump(summary, f, ensure_ascii=False, indent=2, sort_keys=True)
            f.write("\n")
        logger.info(f"결과 저장: {self.directory}")

    def run(self) -> StudyResult:
        """
        설정된 스터디를 실행합니다.

        Returns:
            StudyResult: 파라미터별 통계량, 피팅 결과, 부가 정보
        """
        handlers = {
            "rve": self._rve,
            "gk": self._gk,
            "clt": self._clt,
            "pathwise": self._pathwise,
            "normality": self._normality,
            "moments": self._moments,
        }
        kind = self.config.kind
        if kind not in handlers:
            raise ValueError(f"스터디 종류가 아닙니다: {kind}")
        logger.info(f"스터디 시작: {self.name} (작업자 {self.config.workers})")
        fit = handlers[kind]()
        self.extras["realized"] = self.realized
        self.extras["solves"] = self.run_logger.solve_count
        self.extras["failures"] = self.run_logger.error_count
        result = StudyResult(kind=kind, points=self.points, fit=fit, extras=_plain(self.extras))
        self._write(result)
        return result


def run_study(config: ExperimentConfig) -> Tuple[StudyResult, Path]:
    """스터디를 실행하고 (결과, 결과 폴더) 를 돌려줍니다."""
    runner = StudyRunner(config)
    with study_logging(runner.directory, runner.name):
        result = runner.run()
    return result, runner.directory


def run_verify(config: ExperimentConfig) -> Tuple[VerifyReport, Path]:
    """
    항등식 검사를 실행하고 검사별 차이를 study.csv / summary.json 에 씁니다.

    Returns:
        (VerifyReport, 결과 폴더). report.passed 가 False 이면 호출자가 0 이 아닌 종료 코드를 돌려줍니다.
    """
    build = git_describe()
    name = study_name("verify", config.d, [config.verify.side], config.verify.realizations,
                      config.law.tag(), build)
    directory = Path(config.out) / name
    RunLogger(directory)
    with study_logging(directory, name):
        report = identity_verifier.run(config)

    frame = pd.DataFrame([c.model_dump() for c in report.checks],
                         columns=["name", "discrepancy", "threshold", "passed", "detail"])
    frame.to_csv(directory / "study.csv", index=False, float_format="%.17g")
    summary = {
        "study": name,
        "build": build,
        "config": config.model_dump(mode="json", exclude=EXECUTION_KEYS),
        "result": {"passed": report.passed, **_plain(report.model_dump())},
    }
    with open(directory / "summary.json", "w", encoding="utf-8") as f:
        json.dump(summary, f, ensure_ascii=False, indent=2, sort_keys=True)
        f.write("\n")
    return report, directory
