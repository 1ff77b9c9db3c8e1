import argparse
import asyncio
import sys
import uuid
from collections.abc import Sequence
from pathlib import Path

from loguru import logger

from fair_meta_dg import bootstrap
from fair_meta_dg.application import services
from fair_meta_dg.application.commands import (
    AdaptCommand,
    EvaluateCommand,
    MetaTrainCommand,
    SynthesizeDatasetsCommand,
    TrainDisentanglerCommand,
)
from fair_meta_dg.domain.exceptions import FeedError
from fair_meta_dg.domain.model import AblationKind, Method
from fair_meta_dg.infrastructure.config import load_config
from fair_meta_dg.infrastructure.environment import (
    format_environment_info,
    get_environment_info,
)
from fair_meta_dg.infrastructure.exceptions import InfrastructureError
from fair_meta_dg.infrastructure.logging_utils import configure_logging

PROG = "fair-meta-dg"


def _common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, help="key = value 설정 파일")
    parser.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="설정 값 덮어쓰기 (여러 번 사용 가능)",
    )
    parser.add_argument("--seed", type=int, help="실험 seed (--set seed=N 과 같음)")
    parser.add_argument("--log-level", default="INFO")
    parser.add_argument("--log-file", type=Path)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog=PROG, description="Fairness-aware meta-learning for domain generalization"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    synth = sub.add_parser("synth", help="합성 다중 도메인 CSV 와 잠재변수 sidecar 생성")
    _common(synth)
    synth.add_argument("--out", type=Path, help="출력 디렉터리 (기본: <output_dir>/data)")

    stage1 = sub.add_parser("train-disentangler", help="stage-1 disentanglement 학습")
    _common(stage1)
    stage1.add_argument("--held-out", help="학습에서 제외할 도메인")
    stage1.add_argument("--out", type=Path, help="체크포인트 경로 (기본: <output_dir>/stage1.ckpt)")

    meta = sub.add_parser("meta-train", help="config.method 의 stage-2 학습")
    _common(meta)
    meta.add_argument("--method", choices=[m.value for m in Method])
    meta.add_argument("--stage1", type=Path, help="stage-1 체크포인트")
    meta.add_argument("--held-out", help="학습에서 제외할 도메인")
    meta.add_argument("--out", type=Path, help="체크포인트 경로 (기본: <output_dir>/classifier.ckpt)")

    adapt = sub.add_parser("adapt", help="few-shot 적응")
    _common(adapt)
    adapt.add_argument("--classifier", type=Path, required=True)
    adapt.add_argument("--stage1", type=Path)
    adapt.add_argument("--domain", required=True)
    adapt.add_argument("--out", type=Path, help="체크포인트 경로 (기본: <output_dir>/adapted.ckpt)")

    evaluate = sub.add_parser("evaluate", help="평가 split 에서 정확도/공정성 지표 계산")
    _common(evaluate)
    evaluate.add_argument("--classifier", type=Path, required=True)
    evaluate.add_argument("--domain", required=True)
    evaluate.add_argument("--out", type=Path, help="출력 디렉터리 (기본: <output_dir>)")

    lodo = sub.add_parser("lodo", help="leave-one-domain-out 전체 실행")
    _common(lodo)
    lodo.add_argument("--method", choices=[m.value for m in Method])

    ablate = sub.add_parser("ablate", help="inner loop / 증강 제거 ablation 실행")
    _common(ablate)
    ablate.add_argument(
        "--kind",
        dest="kinds",
        action="append",
        choices=[k.value for k in AblationKind],
        help="생략하면 두 ablation 모두 실행",
    )

    compare = sub.add_parser("compare", help="여러 method × seed 의 LODO 비교표")
    _common(compare)
    compare.add_argument("--methods", default="feed,erm,erm_fc,abs1,abs2")
    compare.add_argument("--seeds", default="0,1,2,3,4")
    return parser


def _csv(text: str) -> list[str]:
    return [v.strip() for v in text.split(",") if v.strip()]


async def dispatch(args: argparse.Namespace) -> int:
    overrides = list(args.overrides)
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    if getattr(args, "method", None):
        overrides.append(f"method={args.method}")
    config = load_config(args.config, overrides)
    out_dir = config.output_dir
    app = bootstrap.bootstrap()

    match args.command:
        case "synth":
            await app.bus.handle(SynthesizeDatasetsCommand(config, args.out or out_dir / "data"))
        case "train-disentangler":
            await app.bus.handle(
                TrainDisentanglerCommand(config, args.out or out_dir / "stage1.ckpt", args.held_out)
            )
        case "meta-train":
            await app.bus.handle(
                MetaTrainCommand(
                    config, args.out or out_dir / "classifier.ckpt", args.stage1, args.held_out
                )
            )
        case "adapt":
            await app.bus.handle(
                AdaptCommand(
                    config,
                    args.classifier,
                    args.domain,
                    args.out or out_dir / "adapted.ckpt",
                    args.stage1,
                )
            )
        case "evaluate":
            await app.bus.handle(
                EvaluateCommand(config, args.classifier, args.domain, args.out or out_dir)
            )
        case "lodo":
            result = await services.run_lodo(app, config, out_dir, run_id=uuid.uuid4())
            avg = result.average()
            logger.info(
                "LODO 완료",
                method=result.method.value,
                accuracy=round(avg.accuracy, 4),
                delta_dp=avg.delta_dp,
            )
        case "ablate":
            kinds = [AblationKind(k) for k in args.kinds] if args.kinds else list(AblationKind)
            await services.run_ablations(app, config, kinds, out_dir)
        case "compare":
            methods = [Method(m) for m in _csv(args.methods)]
            seeds = [int(s) for s in _csv(args.seeds)]
            await services.compare_methods(app, config, methods, seeds, out_dir)
    return 0


def cli_main(argv: Sequence[str] | None = None) -> int:
    """종료 코드: 0 성공, 1 실행 오류 (stderr 에 한 줄), 2 잘못된 사용법"""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if isinstance(e.code, int) else 2

    configure_logging(args.log_level, args.log_file)
    try:
        return asyncio.run(dispatch(args))
    except (FeedError, InfrastructureError, OSError, ValueError) as e:
        logger.opt(exception=e).debug("command failed")
        message = " ".join(str(e).split())
        sys.stderr.write(f"error: {type(e).__name__}: {message}\n")
        return 1


def global_exception_handler(exc_type, exc_value, exc_traceback):
    """전역 예외 처리기"""
    logger.opt(exception=(exc_type, exc_value, exc_traceback)).error(
        "An unexpected error occurred"
    )
    logger.error("Environment at time of error:")
    logger.error(format_environment_info(get_environment_info()))


def main():
    """명령행 진입점"""
    sys.excepthook = global_exception_handler
    configure_logging()
    logger.info(format_environment_info(get_environment_info()))
    try:
        sys.exit(cli_main(sys.argv[1:]))
    except KeyboardInterrupt:
        logger.info("Interrupted. Exiting.")
        sys.exit(130)


if __name__ == "__main__":
    main()
