"""
命令行主程序入口

stmrecon 单一命令，子命令与各模块对应：
run / compare / phantom gen / nullspace / maps / sensitivity / recon <method> / metrics <kind>
"""

import functools
import json
import sys
from pathlib import Path

import click
import numpy as np

from src import __version__
from src.calib.calib_gram import build_gram
from src.calib.kernel_support import build_support
from src.calib.nullspace import SketchConfig, exact_projector, filter_annihilation_residual, sketched_projector
from src.data.dataset_io import read_dataset, write_dataset
from src.data.types import RoiMask, SensitivityMaps
from src.metrics.activation import TaskParadigm, tscore_map
from src.metrics.eigen_maps import eigenvalue_maps
from src.metrics.quality import npr_curve, nrmse, nrmse_per_frame
from src.phantom.acquisition import simulate_acquisition
from src.phantom.coils import generate_sensitivities
from src.phantom.multiband import generate_phantom_truth
from src.phantom.sampling import generate_mask
from src.pipeline.compare import DEFAULT_ORDERING, compare
from src.pipeline.config import bundled_configs, load_phantom_job, load_run_config, resolve_config_path
from src.pipeline.runner import REPORT_NAME, execute, write_outputs
from src.recon.baselines import data_sharing, psf_basis_from_acs, zero_filled
from src.recon.config import ReconConfig
from src.recon.loraks import solve_structured_lowrank
from src.recon.lps import solve_lps
from src.recon.operators import ForwardOp, TemporalModel
from src.recon.tikhonov import solve_tikhonov
from src.stm.combine import combine_acs
from src.stm.gram_field import compute_gram_field
from src.stm.interpolation import interpolate_maps
from src.stm.orth_iteration import extract_maps
from src.stm.sensitivity import estimate_sensitivity_maps
from src.utils.errors import StmReconError
from src.utils.log_manager import log_manager
from src.utils.parallel import ENV_WORKERS

RECON_METHODS = ["stm-tikhonov", "stm-loraks", "psf", "lps", "datashare", "zerofill"]


def _guarded(func):
    """把库异常映射为退出码：2 参数错误，3 数值失败"""

    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except StmReconError as e:
            click.echo(f"❌ {e}", err=True)
            sys.exit(e.exit_code)

    return wrapper


def _echo_json(payload):
    click.echo(json.dumps(payload, indent=2, sort_keys=True, ensure_ascii=False))


# ==================== 输入辅助 ====================

def _load_maps(data, maps_path):
    """读取灵敏度；单线圈且未给出时使用全 1"""
    if maps_path:
        return read_dataset(maps_path, "maps")
    if data.coils != 1:
        raise click.UsageError("多线圈数据必须通过 --maps 给出灵敏度")
    return SensitivityMaps(data.grid, np.ones(data.grid.dims + (1,), dtype=np.complex128))


def _load_roi(grid, roi_path):
    return read_dataset(roi_path, "roi") if roi_path else RoiMask.full(grid)


def _combined_acs(data_path, maps_path):
    data = read_dataset(data_path, "kt")
    return data, combine_acs(data, _load_maps(data, maps_path))


def _compute_field(ctx, data, projector_path, shape, radius, coarse):
    """投影矩阵 → Gram 场（可在粗网格上计算）"""
    W = read_dataset(projector_path, "projector")
    support = build_support(shape, radius, data.grid.D)
    eval_grid = data.grid if coarse <= 1 else data.grid.coarsen(coarse)
    return compute_gram_field(W, support, eval_grid, workers=ctx.obj["workers"])


kernel_options = [
    click.option("--shape", type=click.Choice(["ellipsoid", "rectangle"]), default="ellipsoid", help="核支撑形状"),
    click.option("--radius", "--rad", "radius", type=int, default=3, help="核半径 Rad (默认: 3)"),
]


def with_kernel_options(func):
    for option in reversed(kernel_options):
        func = option(func)
    return func


# ==================== 命令组 ====================

@click.group()
@click.option("--workers", "-j", type=int, envvar=ENV_WORKERS, default=None,
              help=f"工作线程数（环境变量 {ENV_WORKERS}）")
@click.option("--verbose", "-v", is_flag=True, help="输出调试日志")
@click.version_option(version=__version__, prog_name="stmrecon")
@click.pass_context
def cli(ctx, workers, verbose):
    """
    STM 动态 MRI 重建工具

    由自校准 (k,t)-space 数据计算时空图并重建欠采样动态序列
    """
    log_manager.configure(verbose)
    ctx.ensure_object(dict)
    ctx.obj["workers"] = workers


@cli.command()
@click.option("--config", "-c", "config_name", required=True,
              help="配置 JSON 路径或内置配置名")
@click.option("--output", "-o", "output_dir", type=click.Path(), help="输出目录路径")
@click.option("--pdf", is_flag=True, help="同时生成 PDF 报告")
@click.pass_context
@_guarded
def run(ctx, config_name, output_dir, pdf):
    """端到端运行：phantom → acquire → calibrate → nullspace → maps → recon → metrics"""
    config = load_run_config(resolve_config_path(config_name))
    click.echo(f"🚀 运行配置: {config.name}")
    outcome = execute(config, ctx.obj["workers"])
    report = outcome.report

    click.echo("✨ 结果:")
    click.echo(f"   加速因子 R: {report['acquisition']['acceleration']:.4f}")
    click.echo(f"   r_C = {report['nullspace']['rank']}, 滤波器数 R = {report['nullspace']['filters']}")
    for method, entry in report["recon"].items():
        click.echo(f"   {method}: NRMSE = {entry['nrmse']:.4f}")
    if "tscore" in report["metrics"]:
        click.echo(f"   t-score 激活对比: {report['metrics']['tscore']['contrast']:.2f}")

    target = output_dir or config.output_dir
    if target:
        path = write_outputs(outcome, target, pdf or config.render_pdf)
        click.echo(f"📁 报告已保存: {path}")
    else:
        _echo_json(report)
    click.echo("✅ 运行完成")


@cli.command("compare")
@click.argument("report_a", type=click.Path(exists=True))
@click.argument("report_b", type=click.Path(exists=True))
@click.option("--export", "-e", type=click.Path(), help="导出对比表 (.csv / .xlsx)")
@click.option("--ordering", default=",".join(DEFAULT_ORDERING), show_default=True,
              help="NRMSE 从大到小的方法顺序，逗号分隔")
@_guarded
def compare_command(report_a, report_b, export, ordering):
    """对比两份报告的指标差异并检查排序约束"""
    a, b = (Path(p) / REPORT_NAME if Path(p).is_dir() else Path(p) for p in (report_a, report_b))
    result = compare(a, b, [m.strip() for m in ordering.split(",") if m.strip()], export)

    click.echo("📊 指标差异:")
    if result.diff.empty:
        click.echo("   (无差异)")
    else:
        click.echo(result.diff.to_string(index=False))
    for check in result.checks:
        mark = "✅" if check["holds"] else "⚠️ "
        status = "ordering holds" if check["holds"] else "ordering violated"
        click.echo(f"{mark} {check['constraint']}: {status} ({check['left']:.4f} vs {check['right']:.4f})")
    if export:
        click.echo(f"📁 对比表已导出: {export}")
    if not result.ok:
        sys.exit(1)


@cli.command("configs")
def list_configs():
    """列出内置配置"""
    for name in bundled_configs():
        click.echo(f"   {name}")


# ==================== phantom ====================

@cli.group()
def phantom():
    """合成体模"""


@phantom.command("gen")
@click.option("--spec", "spec_path", required=True, type=click.Path(exists=True), help="体模参数 JSON")
@click.option("--seed", type=int, default=0, help="随机种子")
@click.option("--out", "output_dir", required=True, type=click.Path(), help="输出目录")
@_guarded
def phantom_gen(spec_path, seed, output_dir):
    """生成体模；给出采样模板时同时生成灵敏度与欠采样数据"""
    job = load_phantom_job(spec_path)
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    truth = generate_phantom_truth(job.phantom, seed)
    write_dataset(out / "image", truth.image)
    write_dataset(out / "roi", truth.roi)
    click.echo(f"✅ 体模已生成: 网格 {truth.image.grid.dims}, T = {truth.image.frames}")

    if job.mask is not None:
        grid = truth.image.grid
        mask = generate_mask(grid, truth.image.frames, job.mask)
        maps = generate_sensitivities(grid, job.coils, seed + 1)
        data = simulate_acquisition(truth.image, maps, mask, job.sigma, seed + 2)
        write_dataset(out / "mask", mask)
        write_dataset(out / "maps", maps)
        write_dataset(out / "kt", data)
        click.echo(f"✅ 欠采样数据已生成: R = {mask.acceleration:.4f}, 线圈数 {job.coils}")
    click.echo(f"📁 保存目录: {out}")


# ==================== nullspace / maps ====================

@cli.command()
@click.option("--data", "data_path", required=True, type=click.Path(exists=True), help="kt 数据集目录")
@click.option("--maps", "maps_path", type=click.Path(exists=True), help="灵敏度目录（多线圈时必需）")
@click.option("--method", type=click.Choice(["exact", "sketch", "sketched"]), default="sketch")
@click.option("--tau", type=float, default=1e-3, show_default=True, help="相对秩阈值")
@click.option("--mu", type=float, default=2.0, show_default=True, help="草图倍数 s = μ·r_C")
@click.option("--seed", type=int, default=0, help="草图随机种子")
@with_kernel_options
@click.option("--out", "output_dir", required=True, type=click.Path(), help="输出目录")
@_guarded
def nullspace(data_path, maps_path, method, tau, mu, seed, shape, radius, output_dir):
    """计算零空间投影矩阵 W"""
    _, combined = _combined_acs(data_path, maps_path)
    support = build_support(shape, radius, combined.grid.D)
    gram = build_gram(combined, support)
    if method == "exact":
        W = exact_projector(gram, tau)
    else:
        W = sketched_projector(gram, SketchConfig(multiplier=mu, seed=seed, tau_rel=tau))
    write_dataset(output_dir, W)
    click.echo(f"✅ 零空间 ({W.method}): r_C = {W.rank_estimate}, R = {W.filter_count}")
    click.echo(f"   湮灭残差: {filter_annihilation_residual(W, gram):.3e}")
    click.echo(f"📁 保存目录: {output_dir}")


@cli.command("maps")
@click.option("--data", "data_path", required=True, type=click.Path(exists=True), help="kt 数据集目录（提供网格）")
@click.option("--projector", "projector_path", required=True, type=click.Path(exists=True), help="投影矩阵目录")
@with_kernel_options
@click.option("--L", "L", type=int, default=4, show_default=True, help="分量数")
@click.option("--coarse", type=int, default=2, show_default=True, help="粗网格因子")
@click.option("--threshold", type=float, default=None, help="局部分量数阈值（相对特征值上界）")
@click.option("--seed", type=int, default=0)
@click.option("--out", "output_dir", required=True, type=click.Path(), help="输出目录")
@click.pass_context
@_guarded
def maps_command(ctx, data_path, projector_path, shape, radius, L, coarse, threshold, seed, output_dir):
    """由投影矩阵计算时空图"""
    data = read_dataset(data_path, "kt")
    field = _compute_field(ctx, data, projector_path, shape, radius, coarse)
    stm = extract_maps(field, L=L, threshold=threshold, seed=seed, workers=ctx.obj["workers"])
    if field.grid != data.grid:
        stm = interpolate_maps(stm, data.grid)
    write_dataset(output_dir, stm)
    click.echo(f"✅ 时空图已计算: L = {stm.components}, 计算网格 {field.grid.dims}")
    click.echo(f"📁 保存目录: {output_dir}")


@cli.command()
@click.option("--data", "data_path", required=True, type=click.Path(exists=True), help="多线圈 kt 数据集目录")
@with_kernel_options
@click.option("--frames", type=click.Choice(["all", "first"]), default="all", show_default=True,
              help="全部帧作为重复，或只用第一帧")
@click.option("--tau", type=float, default=1e-3, show_default=True)
@click.option("--coarse", type=int, default=1, show_default=True)
@click.option("--out", "output_dir", required=True, type=click.Path(), help="输出目录")
@click.pass_context
@_guarded
def sensitivity(ctx, data_path, shape, radius, frames, tau, coarse, output_dir):
    """由 ACS 估计线圈灵敏度（线圈作为帧，L = 1）"""
    data = read_dataset(data_path, "kt")
    support = build_support(shape, radius, data.grid.D)
    maps = estimate_sensitivity_maps(data, support, frames, tau, coarse, workers=ctx.obj["workers"])
    write_dataset(output_dir, maps)
    click.echo(f"✅ 灵敏度已估计: Q = {maps.coils}")
    click.echo(f"📁 保存目录: {output_dir}")


# ==================== recon ====================

@cli.command()
@click.argument("method", type=click.Choice(RECON_METHODS))
@click.option("--data", "data_path", required=True, type=click.Path(exists=True), help="kt 数据集目录")
@click.option("--maps", "maps_path", type=click.Path(exists=True), help="灵敏度目录")
@click.option("--stm", "stm_path", type=click.Path(exists=True), help="时空图目录（stm-* 方法）")
@click.option("--lambda", "lam", type=float, default=1e-3, show_default=True, help="正则化参数 λ")
@click.option("--iters", type=int, default=50, show_default=True, help="迭代次数")
@click.option("--L", "L", type=int, default=None, help="模型分量数（PSF 必需）")
@click.option("--reference", "reference_path", type=click.Path(exists=True), help="参考图像（输出 NRMSE）")
@click.option("--roi", "roi_path", type=click.Path(exists=True), help="ROI 目录")
@click.option("--out", "output_dir", required=True, type=click.Path(), help="输出目录")
@click.pass_context
@_guarded
def recon(ctx, method, data_path, maps_path, stm_path, lam, iters, L, reference_path, roi_path, output_dir):
    """重建欠采样动态序列"""
    data = read_dataset(data_path, "kt")
    maps = _load_maps(data, maps_path)
    cfg = ReconConfig(lam=lam, iters=iters)

    if method == "zerofill":
        image = zero_filled(data, maps)
    elif method == "datashare":
        image = data_sharing(data, maps)
    elif method == "lps":
        image = solve_lps(ForwardOp(maps, data.mask, ctx.obj["workers"]), data, cfg).image
    else:
        op = ForwardOp(maps, data.mask, ctx.obj["workers"])
        if method == "psf":
            if L is None:
                raise click.UsageError("PSF 方法需要 --L")
            model = psf_basis_from_acs(combine_acs(data, maps), L)
        else:
            if not stm_path:
                raise click.UsageError(f"{method} 需要 --stm")
            stm = read_dataset(stm_path, "stm")
            model = TemporalModel.from_stm(stm.truncate(L) if L else stm)
        if method == "stm-loraks":
            loraks_cfg = cfg.model_copy(update={"regularizer": "structured_lowrank"})
            image = solve_structured_lowrank(op, model, data, loraks_cfg).image
        else:
            image = solve_tikhonov(op, model, data, cfg).image

    write_dataset(output_dir, image)
    click.echo(f"✅ {method} 重建完成")
    if reference_path:
        reference = read_dataset(reference_path, "image")
        click.echo(f"   NRMSE = {nrmse(image, reference, _load_roi(image.grid, roi_path)):.4f}")
    click.echo(f"📁 保存目录: {output_dir}")


# ==================== metrics ====================

@cli.group()
def metrics():
    """质量指标与图像堆栈"""


@metrics.command("npr")
@click.option("--reference", "reference_path", required=True, type=click.Path(exists=True), help="全采样参考图像")
@click.option("--stm", "stm_path", type=click.Path(exists=True), help="时空图目录")
@click.option("--data", "data_path", type=click.Path(exists=True), help="kt 数据集（PSF 基由其 ACS 求得）")
@click.option("--maps", "maps_path", type=click.Path(exists=True), help="灵敏度目录")
@click.option("--max-L", "max_L", type=int, default=8, show_default=True)
@click.option("--roi", "roi_path", type=click.Path(exists=True))
@_guarded
def metrics_npr(reference_path, stm_path, data_path, maps_path, max_L, roi_path):
    """NPR(L) 曲线：STM 和/或 PSF"""
    reference = read_dataset(reference_path, "image")
    roi = _load_roi(reference.grid, roi_path)
    if not stm_path and not data_path:
        raise click.UsageError("至少需要 --stm 或 --data")
    curves = {}
    if stm_path:
        model = TemporalModel.from_stm(read_dataset(stm_path, "stm"))
        Ls = range(1, min(max_L, model.components) + 1)
        curves["stm"] = {str(k): v for k, v in npr_curve(reference, model, roi, Ls).items()}
    if data_path:
        _, combined = _combined_acs(data_path, maps_path)
        model = psf_basis_from_acs(combined, max_L)
        curves["psf"] = {str(k): v for k, v in npr_curve(reference, model, roi, range(1, max_L + 1)).items()}
    _echo_json({"npr": curves})


@metrics.command("nrmse")
@click.option("--image", "image_path", required=True, type=click.Path(exists=True), help="重建图像")
@click.option("--reference", "reference_path", required=True, type=click.Path(exists=True), help="参考图像")
@click.option("--roi", "roi_path", type=click.Path(exists=True))
@click.option("--per-frame", is_flag=True, help="同时输出逐帧 NRMSE")
@_guarded
def metrics_nrmse(image_path, reference_path, roi_path, per_frame):
    """NRMSE（可限定 ROI）"""
    image = read_dataset(image_path, "image")
    reference = read_dataset(reference_path, "image")
    roi = _load_roi(reference.grid, roi_path)
    payload = {"nrmse": nrmse(image, reference, roi)}
    if per_frame:
        payload["nrmse_per_frame"] = [float(v) for v in nrmse_per_frame(image, reference, roi)]
    _echo_json(payload)


@metrics.command("eig")
@click.option("--data", "data_path", required=True, type=click.Path(exists=True), help="kt 数据集目录（提供网格）")
@click.option("--projector", "projector_path", required=True, type=click.Path(exists=True), help="投影矩阵目录")
@with_kernel_options
@click.option("--coarse", type=int, default=1, show_default=True)
@click.option("--k", "k", type=int, default=10, show_default=True, help="特征值个数")
@click.option("--out", "output_dir", required=True, type=click.Path(), help="输出目录")
@click.pass_context
@_guarded
def metrics_eig(ctx, data_path, projector_path, shape, radius, coarse, k, output_dir):
    """逐体素 G(x) 的归一化特征值图"""
    data = read_dataset(data_path, "kt")
    field = _compute_field(ctx, data, projector_path, shape, radius, coarse)
    stack = eigenvalue_maps(field, k, ctx.obj["workers"])
    write_dataset(output_dir, stack)
    click.echo(f"✅ 特征值图: {', '.join(stack.labels)}")
    click.echo(f"📁 保存目录: {output_dir}")


@metrics.command("tscore")
@click.option("--image", "image_path", required=True, type=click.Path(exists=True), help="动态图像")
@click.option("--block", type=int, default=20, show_default=True, help="块长度（帧）")
@click.option("--start-with", type=click.Choice(["rest", "task"]), default="rest", show_default=True)
@click.option("--transition", type=int, default=2, show_default=True, help="块边界后丢弃的帧数")
@click.option("--out", "output_dir", required=True, type=click.Path(), help="输出目录")
@_guarded
def metrics_tscore(image_path, block, start_with, transition, output_dir):
    """块设计 t-score 图"""
    image = read_dataset(image_path, "image")
    paradigm = TaskParadigm.alternating(image.frames, block, start_with)
    tmap = tscore_map(image, paradigm, transition)
    write_dataset(output_dir, tmap)
    click.echo(f"✅ t-score 图: 最大值 {float(np.max(tmap.values)):.2f}")
    click.echo(f"📁 保存目录: {output_dir}")


def main():
    """命令行入口"""
    cli(obj={})


if __name__ == "__main__":
    main()
