"""Command-line harness.

Every subcommand is a thin client of the HTTP API: with ``--server`` it
talks to a running service, without it the same requests go to an
in-process app over an ASGI transport — identical code path, no sockets.

Exit codes: 0 success, 1 test/experiment failure, 2 configuration error.
"""

import asyncio
import json
from pathlib import Path
from typing import Any

import click
import httpx

from .config import KNOWN_KINDS
from .service import create_app

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2

# HTTP status → exit code: client-side mistakes are configuration errors,
# server-side rejections are run failures.
_STATUS_EXITS = {400: EXIT_CONFIG, 404: EXIT_CONFIG, 409: EXIT_FAILURE, 422: EXIT_FAILURE}


class ApiClient:
    """One HTTP client per CLI invocation, remote or in-process."""

    def __init__(self, server: str | None) -> None:
        self._server = server
        self._app = None
        self._client: httpx.AsyncClient | None = None

    async def __aenter__(self) -> "ApiClient":
        if self._server:
            self._client = httpx.AsyncClient(base_url=self._server, timeout=300.0)
        else:
            self._app = create_app()
            self._client = httpx.AsyncClient(
                transport=httpx.ASGITransport(app=self._app),
                base_url="http://twincar.local",
                timeout=300.0,
            )
        return self

    async def __aexit__(self, *exc_info: object) -> None:
        assert self._client is not None
        await self._client.aclose()
        if self._app is not None:
            for comp in list(self._app.state.compositions.values()):
                comp.shutdown()
            self._app.state.compositions.clear()

    async def call(self, method: str, path: str, **kwargs: Any) -> dict:
        assert self._client is not None
        try:
            response = await self._client.request(method, path, **kwargs)
        except httpx.HTTPError as exc:
            raise click.ClickException(f"cannot reach service: {exc}") from exc
        if response.status_code >= 400:
            detail = _error_detail(response)
            click.echo(f"error: {detail}", err=True)
            raise SystemExit(_STATUS_EXITS.get(response.status_code, EXIT_FAILURE))
        if response.status_code == 204:
            return {}
        return response.json()


def _error_detail(response: httpx.Response) -> str:
    try:
        return str(response.json().get("detail", response.text))
    except (ValueError, AttributeError):
        return response.text or f"HTTP {response.status_code}"


def _run(coro: Any) -> Any:
    return asyncio.run(coro)


@click.group()
@click.option("--server", metavar="URL", default=None, help="Talk to a running service instead of in-process.")
@click.pass_context
def cli(ctx: click.Context, server: str | None) -> None:
    """Digital-twin stack for an Ackermann-steered toy vehicle."""
    ctx.obj = server


@cli.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8080, show_default=True, type=int)
def serve(host: str, port: int) -> None:
    """Run the HTTP service."""
    import uvicorn

    uvicorn.run(create_app(), host=host, port=port)


@cli.command()
@click.argument("kind", type=click.Choice(KNOWN_KINDS))
@click.option("--config", "config_path", type=click.Path(), default=None, help="Stack config YAML.")
@click.option("--seconds", type=float, default=None, help="Advance this much virtual time, then exit.")
@click.option("--realtime", is_flag=True, help="Pace against the wall clock until interrupted.")
@click.pass_obj
def run(server: str | None, kind: str, config_path: str | None, seconds: float | None, realtime: bool) -> None:
    """Launch a composition of the given KIND."""
    if realtime and seconds is not None:
        raise click.UsageError("--realtime and --seconds are mutually exclusive")

    async def _main() -> None:
        async with ApiClient(server) as api:
            body = {"kind": kind, "config_path": config_path, "realtime": realtime}
            created = await api.call("POST", "/compositions", json=body)
            cid = created["id"]
            click.echo(f"composition {cid} ({created['kind']}): {len(created['nodes'])} nodes")
            try:
                if realtime:
                    click.echo("running in real time; Ctrl+C to stop")
                    while True:
                        await asyncio.sleep(2.0)
                        stats = await api.call("GET", f"/compositions/{cid}")
                        click.echo(
                            f"t={stats['virtual_time_ns'] / 1e9:.1f}s "
                            f"hal_writes={stats['stats'].get('hal_write_count', 0)}"
                        )
                else:
                    await api.call(
                        "POST", f"/compositions/{cid}/advance", json={"seconds": seconds or 1.0}
                    )
                    stats = await api.call("GET", f"/compositions/{cid}")
                    click.echo(json.dumps(stats["stats"], indent=2))
            except (KeyboardInterrupt, asyncio.CancelledError):
                pass
            finally:
                await api.call("DELETE", f"/compositions/{cid}")

    _run(_main())


@cli.command()
@click.option("--config", "config_path", type=click.Path(), required=True, help="Stack config YAML (updated in place).")
@click.option("--target", type=float, default=1.0, show_default=True, help="Target distance in meters.")
@click.option("--duration", type=float, default=1.45, show_default=True, help="Run duration in seconds.")
@click.pass_obj
def calibrate(server: str | None, config_path: str, target: float, duration: float) -> None:
    """Fit the velocity factor and persist it into the config file."""

    async def _main() -> int:
        async with ApiClient(server) as api:
            body = {
                "config_path": str(Path(config_path).resolve()),
                "target_m": target,
                "duration_s": duration,
                "persist": True,
            }
            result = await api.call("POST", "/experiments/calibration", json=body)
        click.echo(
            f"velocity_factor={result['velocity_factor']:.6f} "
            f"iterations={result['iterations']} residual={result['residual_m']:.2e} m"
        )
        click.echo(
            f"validation: mean deviation {result['mean_deviation_m'] * 100:+.2f} cm, "
            f"range [{result['min_deviation_m'] * 100:+.2f}, {result['max_deviation_m'] * 100:+.2f}] cm"
        )
        failed = [t for t in result["validation"] if not t["passed"]]
        for t in failed:
            click.echo(f"  trial {t['index']}: {t['distance_m']:.4f} m FAIL", err=True)
        return EXIT_FAILURE if failed else EXIT_OK

    raise SystemExit(_run(_main()))


@cli.command()
@click.option("--repetitions", "-n", type=int, default=10, show_default=True)
@click.option("--noise", type=click.Choice(["on", "off"]), default="on", show_default=True)
@click.option("--config", "config_path", type=click.Path(), default=None, help="Stack config YAML.")
@click.option("--duration", type=float, default=1.45, show_default=True)
@click.option("--stop-delay", type=float, default=0.0, show_default=True, help="Delay the stop command (seconds).")
@click.option("--report", "report_path", type=click.Path(), default=None, help="Write JSON-lines trial reports.")
@click.pass_obj
def trial(
    server: str | None,
    repetitions: int,
    noise: str,
    config_path: str | None,
    duration: float,
    stop_delay: float,
    report_path: str | None,
) -> None:
    """Run repeated timed full-speed runs and report distances."""

    async def _main() -> int:
        body = {
            "config_path": str(Path(config_path).resolve()) if config_path else None,
            "repetitions": repetitions,
            "noise": noise == "on",
            "duration_s": duration,
            "stop_delay_s": stop_delay,
        }
        async with ApiClient(server) as api:
            result = await api.call("POST", "/experiments/trials", json=body)
        for t in result["reports"]:
            verdict = "ok" if t["passed"] else "FAIL"
            click.echo(
                f"trial {t['index']:2d}: {t['distance_m']:.4f} m "
                f"(deviation {t['deviation_m'] * 100:+.2f} cm) {verdict}"
            )
        if report_path:
            Path(report_path).write_text(
                "".join(json.dumps(t) + "\n" for t in result["reports"])
            )
        return EXIT_OK if result["all_passed"] else EXIT_FAILURE

    raise SystemExit(_run(_main()))


@cli.command()
@click.option("--report", "report_path", type=click.Path(), default=None, help="Write the JSON-lines report here.")
@click.option("--config", "config_path", type=click.Path(), default=None, help="Stack config YAML.")
@click.option(
    "--inject-fault",
    type=click.Choice(["clamp", "bridge-cut"]),
    default=None,
    help="Deliberately break the stack to prove the suite catches it.",
)
@click.pass_obj
def suite(server: str | None, report_path: str | None, config_path: str | None, inject_fault: str | None) -> None:
    """Run the ordered integration suite."""

    async def _main() -> int:
        body = {
            "config_path": str(Path(config_path).resolve()) if config_path else None,
            "inject_fault": inject_fault,
        }
        async with ApiClient(server) as api:
            result = await api.call("POST", "/suite", json=body)
        for check in result["checks"]:
            verdict = "pass" if check["passed"] else "FAIL"
            click.echo(f"{check['name']:24s} {verdict}  {check['detail']}")
        if report_path:
            header = {
                "suite": "twincar-integration",
                "ok": result["ok"],
                "fault_injection": result["fault_injection"],
                "checks": len(result["checks"]),
            }
            lines = [header] + result["checks"]
            Path(report_path).write_text("".join(json.dumps(line) + "\n" for line in lines))
        return EXIT_OK if result["ok"] else EXIT_FAILURE

    raise SystemExit(_run(_main()))


@cli.group()
def manifest() -> None:
    """Template-manifest tools."""


@manifest.command("validate")
@click.argument("path", type=click.Path())
@click.pass_obj
def manifest_validate(server: str | None, path: str) -> None:
    """Check mandatory roles and content hashes of a manifest file."""

    async def _main() -> int:
        async with ApiClient(server) as api:
            result = await api.call(
                "POST", "/manifest/validation", json={"path": str(Path(path).resolve())}
            )
        for message in result["errors"]:
            click.echo(f"error: {message}", err=True)
        for message in result["warnings"]:
            click.echo(f"warning: {message}")
        missing = [role for role, present in result["completeness"].items() if not present]
        click.echo(
            f"checked {result['checked_files']} files; "
            + ("complete" if not missing else f"missing roles: {', '.join(missing)}")
        )
        click.echo("manifest OK" if result["ok"] else "manifest INVALID")
        return EXIT_OK if result["ok"] else EXIT_FAILURE

    raise SystemExit(_run(_main()))


def main() -> None:
    cli(obj=None)


if __name__ == "__main__":
    main()
