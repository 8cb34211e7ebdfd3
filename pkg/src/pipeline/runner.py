"""
端到端流水线

phantom → acquire → calibrate → nullspace → maps → recon → metrics
每个阶段单独计时，失败时抛出带阶段名的 StageError；
报告中除 timings 外的内容在相同种子下逐字节一致
"""

import hashlib
import json
import time
from contextlib import contextmanager
from pathlib import Path
from typing import Any, Dict, NamedTuple, Optional, Tuple, Union

import numpy as np

from src.calib.calib_gram import build_gram
from src.calib.kernel_support import build_support
from src.calib.nullspace import (
    SketchConfig,
    exact_projector,
    filter_annihilation_residual,
    projector_distance,
    sketched_projector,
)
from src.data.dataset_io import write_dataset
from src.data.kspace_processor import coil_compress, compress_maps
from src.data.types import DynamicImage, ImageStack, StmSet
from src.metrics.activation import TaskParadigm, activation_contrast, tscore_map
from src.metrics.eigen_maps import eigenvalue_maps
from src.metrics.quality import npr, npr_curve, nrmse, nrmse_per_frame
from src.phantom.acquisition import simulate_acquisition
from src.phantom.coils import generate_sensitivities
from src.phantom.multiband import generate_phantom_truth
from src.phantom.sampling import generate_mask
from src.pipeline.config import RunConfig, load_run_config
from src.pipeline.report_renderer import render_report_pdf
from src.recon.baselines import data_sharing, psf_basis_from_acs, zero_filled
from src.recon.lps import solve_lps
from src.recon.loraks import solve_structured_lowrank
from src.recon.operators import ForwardOp, TemporalModel
from src.recon.sweep import lambda_sweep
from src.recon.tikhonov import solve_tikhonov
from src.stm.combine import combine_acs
from src.stm.gram_field import GramField, compute_gram_field
from src.stm.interpolation import interpolate_maps
from src.stm.orth_iteration import extract_maps
from src.stm.sensitivity import estimate_sensitivity_maps
from src.utils.errors import StageError
from src.utils.log_manager import log_manager

logger = log_manager.get_logger(__name__)

REPORT_VERSION = 1
REPORT_NAME = "report.json"

Report = Dict[str, Any]


class RunOutcome(NamedTuple):
    """运行结果：报告、图像堆栈、各方法的重建图像"""

    report: Report
    stacks: Dict[str, ImageStack]
    images: Dict[str, DynamicImage]


@contextmanager
def _stage(name: str, timings: Dict[str, float]):
    """阶段计时，异常统一包装为 StageError"""
    start = time.perf_counter()
    try:
        yield
    except StageError:
        raise
    except Exception as e:
        raise StageError(name, e) from e
    finally:
        timings[name] = time.perf_counter() - start
    log_manager.ok(logger, "阶段 %s 完成 (%.2f s)", name, timings[name])


def fingerprint(*arrays: np.ndarray) -> str:
    """数组内容的 SHA-256 指纹（前 16 位）"""
    digest = hashlib.sha256()
    for array in arrays:
        array = np.ascontiguousarray(array)
        digest.update(str(array.shape).encode("utf-8"))
        digest.update(array.tobytes())
    return digest.hexdigest()[:16]


def _noise_sigma(config: RunConfig, image: DynamicImage, roi_flags: np.ndarray) -> float:
    """σ 直接给出，或由 ROI 内信号均方根与目标 SNR 换算"""
    acq = config.acquisition
    if acq.snr_db is None:
        return float(acq.sigma)
    rms = float(np.sqrt(np.mean(np.abs(image.values[roi_flags]) ** 2)))
    return rms / 10.0 ** (acq.snr_db / 20.0)


def _map_correlation(estimated, truth, roi_flags: np.ndarray) -> float:
    """逐体素 |⟨ĉ, c⟩| / (‖ĉ‖‖c‖) 在 ROI 内的平均"""
    inner = np.abs(np.sum(np.conj(estimated.values) * truth.values, axis=3))
    norms = np.linalg.norm(estimated.values, axis=3) * np.linalg.norm(truth.values, axis=3)
    corr = np.where(norms > 0, inner / np.where(norms > 0, norms, 1.0), 0.0)
    return float(np.mean(corr[roi_flags]))


def _stm_from_projector(W, support, grid, config: RunConfig, L: int, workers) -> Tuple[StmSet, GramField]:
    """投影矩阵 → Gram 场 → 时空图（粗网格时插值回目标网格）"""
    eval_grid = grid if config.maps.coarse <= 1 else grid.coarsen(config.maps.coarse)
    field = compute_gram_field(W, support, eval_grid, workers=workers)
    stm = extract_maps(field, L=L, threshold=config.maps.threshold, iters=config.maps.iters,
                       squarings=config.maps.squarings, seed=config.seed + 3, workers=workers)
    if eval_grid != grid:
        stm = interpolate_maps(stm, grid)
    return stm, field


def execute(config: Union[RunConfig, str, Path, dict], workers: int = None) -> RunOutcome:
    """
    执行完整流水线

    Args:
        config: 运行配置（或其 JSON 路径）
        workers: 线程数

    Returns:
        RunOutcome
    """
    config = load_run_config(config)
    spec = config.phantom_spec
    T = spec.frames
    seeds = {"phantom": config.seed, "coils": config.seed + 1, "noise": config.seed + 2,
             "maps": config.seed + 3, "sketch": config.nullspace.seed}
    timings: Dict[str, float] = {}
    report: Report = {"version": REPORT_VERSION, "name": config.name, "seeds": seeds,
                      "config": config.model_dump(mode="json")}
    stacks: Dict[str, ImageStack] = {}
    images: Dict[str, DynamicImage] = {}

    with _stage("phantom", timings):
        truth = generate_phantom_truth(spec, seeds["phantom"])
        grid, roi = spec.grid, truth.roi
        reference = truth.image

    with _stage("acquire", timings):
        mask = generate_mask(grid, T, config.mask)
        maps_true = generate_sensitivities(grid, config.acquisition.coils, seeds["coils"])
        sigma = _noise_sigma(config, reference, roi.flags)
        data = simulate_acquisition(reference, maps_true, mask, sigma, seeds["noise"])
        compression = None
        if config.acquisition.compress_to is not None:
            cc = coil_compress(data, config.acquisition.compress_to)
            data, maps_true = cc.dataset, compress_maps(maps_true, cc.matrix)
            compression = float(cc.energy_fraction)
        report["phantom"] = {
            "fingerprint": fingerprint(reference.values),
            "mask_fingerprint": fingerprint(mask.flags),
            "dims": list(grid.dims),
            "frames": T,
            "roi_voxels": int(roi.flags.sum()),
        }
        report["acquisition"] = {
            "acceleration": float(mask.acceleration),
            "acs_box": [list(pair) for pair in mask.acs_box],
            "coils": int(data.coils),
            "sigma": float(sigma),
            "compression_energy": compression,
        }

    support = build_support(config.kernel.shape, config.kernel.radius, grid.D)

    if config.acquisition.estimate_maps:
        with _stage("sensitivity", timings):
            estimated = estimate_sensitivity_maps(data, support, config.acquisition.map_frames,
                                                  config.nullspace.tau, config.maps.coarse,
                                                  seed=seeds["maps"], workers=workers)
            report["sensitivity"] = {"correlation": _map_correlation(estimated, maps_true, roi.flags)}

    with _stage("calibrate", timings):
        combined = combine_acs(data, maps_true)
        gram = build_gram(combined, support)
        report["calibration"] = {"support_size": int(support.size), "gram_dim": int(gram.matrix.shape[0])}

    with _stage("nullspace", timings):
        ns = config.nullspace
        if ns.method == "exact":
            W = exact_projector(gram, ns.tau)
        else:
            W = sketched_projector(gram, SketchConfig(multiplier=ns.mu, seed=ns.seed,
                                                      pilot_frames=ns.pilot_frames, tau_rel=ns.tau))
        report["nullspace"] = {
            "method": W.method,
            "rank": int(W.rank_estimate),
            "filters": int(W.filter_count),
            "sketch_dim": None if W.sketch_dim is None else int(W.sketch_dim),
            "residual": filter_annihilation_residual(W, gram),
        }

    L = config.maps.L
    L_extract = min(T, max(L, config.metrics.npr_max_L))
    with _stage("maps", timings):
        stm, field = _stm_from_projector(W, support, grid, config, L_extract, workers)
        stacks["eigvals"] = eigenvalue_maps(field, min(config.metrics.eigen_count, T), workers)
        report["maps"] = {"L": L, "extracted": L_extract, "coarse": config.maps.coarse,
                          "eval_dims": list(field.grid.dims)}
        if stm.local_components is not None:
            report["maps"]["mean_local_L"] = float(np.mean(stm.local_components[roi.flags]))

    with _stage("recon", timings):
        report["recon"] = _reconstruct(config, stm, combined, data, maps_true, reference, roi, images, workers)

    with _stage("metrics", timings):
        report["metrics"] = _metrics(config, stm, combined, reference, truth, images, stacks, L_extract)

    if config.sketch_study is not None:
        with _stage("sketch_study", timings):
            report["sketch_study"] = _sketch_study(config, gram, support, grid, reference, roi, timings, workers)

    report["timings"] = {k: float(v) for k, v in timings.items()}
    return RunOutcome(report, stacks, images)


def _reconstruct(config, stm, combined, data, maps, reference, roi, images, workers) -> Dict[str, Any]:
    """按配置的方法逐个重建并计算 NRMSE"""
    rc = config.recon
    op = ForwardOp(maps, data.mask, workers)
    stm_model = TemporalModel.from_stm(stm.truncate(config.maps.L), use_local=config.maps.threshold is not None)
    tikhonov_cfg = rc.settings.model_copy(update={"regularizer": "tikhonov"})
    loraks_cfg = rc.settings.model_copy(update={"regularizer": "structured_lowrank"})
    results: Dict[str, Any] = {}

    def model_based(model, solver, cfg):
        if rc.lambdas:
            sweep = lambda_sweep(lambda lam: solver(op, model, data, cfg.with_lambda(lam)).image,
                                 rc.lambdas, reference, roi)
            return sweep.best_image, sweep.best_lambda, [[lam, err] for lam, err in sweep.table]
        return solver(op, model, data, cfg).image, float(cfg.lam), None

    for method in rc.methods:
        sweep_table = None
        lam = None
        if method == "zerofill":
            image = zero_filled(data, maps)
        elif method == "datashare":
            image = data_sharing(data, maps)
        elif method == "stm-tikhonov":
            image, lam, sweep_table = model_based(stm_model, solve_tikhonov, tikhonov_cfg)
        elif method == "stm-loraks":
            image, lam, sweep_table = model_based(stm_model, solve_structured_lowrank, loraks_cfg)
        elif method == "psf":
            psf_model = psf_basis_from_acs(combined, rc.L_psf or config.maps.L)
            image, lam, sweep_table = model_based(psf_model, solve_tikhonov, tikhonov_cfg)
        else:
            image = solve_lps(op, data, rc.settings).image
        images[method] = image
        entry = {"nrmse": nrmse(image, reference, roi), "lambda": lam}
        if sweep_table is not None:
            entry["sweep"] = sweep_table
        if config.metrics.per_frame:
            entry["nrmse_per_frame"] = [float(v) for v in nrmse_per_frame(image, reference, roi)]
        results[method] = entry
        logger.info("%s: NRMSE = %.4f", method, entry["nrmse"])
    return results


def _metrics(config, stm, combined, reference, truth, images, stacks, L_extract) -> Dict[str, Any]:
    """NPR 曲线与 t-score"""
    Ls = list(range(1, min(config.metrics.npr_max_L, L_extract) + 1))
    stm_model = TemporalModel.from_stm(stm)
    psf_model = psf_basis_from_acs(combined, max(Ls))
    out: Dict[str, Any] = {
        "npr": {
            "stm": {str(k): v for k, v in npr_curve(reference, stm_model, truth.roi, Ls).items()},
            "psf": {str(k): v for k, v in npr_curve(reference, psf_model, truth.roi, Ls).items()},
        }
    }
    task = config.phantom_spec.task
    if config.metrics.tscore and task is not None:
        candidates = [m for m in ("stm-loraks", "stm-tikhonov") if m in images]
        source = min(candidates, key=lambda m: nrmse(images[m], reference, truth.roi)) if candidates else "truth"
        series = images[source] if candidates else reference
        paradigm = TaskParadigm.alternating(config.phantom_spec.frames, task.block_length, task.start_with)
        tmap = tscore_map(series, paradigm)
        stacks["tscore"] = tmap
        region = truth.activation > 0.5
        out["tscore"] = {
            "source": source,
            "contrast": activation_contrast(tmap, region, truth.roi.flags),
            "mean_inside": float(np.mean(tmap.values[..., 0][region])),
        }
    return out


def _sketch_study(config, gram, support, grid, reference, roi, timings, workers) -> Dict[str, Any]:
    """草图维度 μ 与随机实现对投影距离、NPR 与耗时的影响"""
    ns, study = config.nullspace, config.sketch_study
    start = time.perf_counter()
    exact = exact_projector(gram, ns.tau)
    timings["sketch_study.exact"] = time.perf_counter() - start

    rows = []
    for mu in study.multipliers:
        distances, nprs, elapsed = [], [], []
        for r in range(study.realizations):
            start = time.perf_counter()
            W = sketched_projector(gram, SketchConfig(multiplier=mu, seed=ns.seed + r,
                                                      pilot_frames=ns.pilot_frames, tau_rel=ns.tau))
            elapsed.append(time.perf_counter() - start)
            distances.append(projector_distance(W, exact))
            stm, _ = _stm_from_projector(W, support, grid, config, config.maps.L, workers)
            nprs.append(npr(reference, TemporalModel.from_stm(stm), roi))
        rows.append({
            "mu": float(mu),
            "distance_mean": float(np.mean(distances)),
            "distance_max": float(np.max(distances)),
            "npr_mean": float(np.mean(nprs)),
            "npr_std": float(np.std(nprs)),
        })
        timings[f"sketch_study.mu={mu:g}"] = float(np.median(elapsed))
    first = timings[f"sketch_study.mu={study.multipliers[0]:g}"]
    timings["sketch_speedup"] = timings["sketch_study.exact"] / first if first > 0 else float("inf")
    return {"rows": rows, "exact_rank": int(exact.rank_estimate)}


# ==================== 输出 ====================

def write_report(report: Report, path: Union[str, Path]) -> Path:
    """写入报告 JSON（键排序，保证逐字节可比）"""
    path = Path(path)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(report, f, indent=2, sort_keys=True, ensure_ascii=False)
    return path


def read_report(path: Union[str, Path]) -> Report:
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)


def without_timings(report: Report) -> Report:
    """去掉 timings 后的报告副本"""
    return {k: v for k, v in report.items() if k != "timings"}


def write_outputs(outcome: RunOutcome, output_dir: Union[str, Path], render_pdf: bool = False) -> Path:
    """
    写入报告、图像堆栈与可选的 PDF

    Returns:
        报告路径
    """
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    for name, stack in outcome.stacks.items():
        write_dataset(output_dir / name, stack)
    report_path = write_report(outcome.report, output_dir / REPORT_NAME)
    if render_pdf:
        render_report_pdf(outcome.report, outcome.stacks, output_dir / "report.pdf")
    return report_path


def run(config: Union[RunConfig, str, Path, dict], workers: int = None,
        output_dir: Optional[Union[str, Path]] = None) -> Report:
    """
    运行流水线并返回报告；配置或参数给出输出目录时写入文件

    Args:
        config: 运行配置
        workers: 线程数
        output_dir: 输出目录（覆盖配置中的 output_dir）

    Returns:
        Report
    """
    config = load_run_config(config)
    outcome = execute(config, workers)
    target = output_dir or config.output_dir
    if target:
        write_outputs(outcome, target, config.render_pdf)
    return outcome.report
