"""External-encoder execution: command templating, paced/unpaced runs, measurement.

Two measurement modes mirror the two throughput experiments: ``unpaced``
streams frames as fast as the encoder consumes them (its maximum speed),
``paced`` delivers them through the pacer at the capture rate (the
real-time condition).

Deadlock contract: the child's stdout and stderr are drained on their own
threads, concurrently with stdin feeding. Without this, a full output pipe
blocks the child while we block writing its input.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import os
import re
import statistics
import subprocess
import tempfile
import threading
import time
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Sequence

from . import pacer
from .dataset import VideoSequence, Y4M_FRAME_MARKER, build_y4m_header, open_frame_reader
from .errors import (
    ConfigError,
    DeliveryAbortedError,
    EmptyGroupError,
    EncoderRunError,
    InvalidInputError,
    TemplateError,
)
from .ioutil import atomic_write_text
from .pacer import PacingReport, write_all

log = logging.getLogger(__name__)


class InputMode(str, Enum):
    STDIN_RAW = "stdin_raw"
    STDIN_Y4M = "stdin_y4m"
    FILE = "file"


class OutputMode(str, Enum):
    FILE = "file"
    STDOUT = "stdout"


class RunMode(str, Enum):
    PACED = "paced"
    UNPACED = "unpaced"


_PLACEHOLDER_RE = re.compile(r"\{([A-Za-z_][A-Za-z0-9_]*)\}")
_STDERR_TAIL_LIMIT = 65536
_DRAIN_CHUNK = 65536

RUNS_CSV_COLUMNS = (
    "profile",
    "seq",
    "bitrate_kbps",
    "mode",
    "wall_time_s",
    "frames",
    "throughput_fps",
    "output_bytes",
    "achieved_kbps",
)

RECORD_SUFFIX = ".json"
QUALITY_SUFFIX = ".quality.json"
OUTPUT_SUFFIX = ".bin"

METRIC_PLACEHOLDERS = ("reference", "distorted", "width", "height", "fps", "report_out")


def _format_number(x) -> str:
    value = float(x)
    return str(int(value)) if value.is_integer() else repr(value)


def _count_placeholders(tokens: Sequence[str]) -> dict[str, int]:
    counts: dict[str, int] = {}
    for token in tokens:
        for match in _PLACEHOLDER_RE.finditer(token):
            counts[match.group(1)] = counts.get(match.group(1), 0) + 1
    return counts


def _substitute_tokens(tokens: Sequence[str], values: Mapping[str, str], context: str) -> list[str]:
    def replace(match: re.Match) -> str:
        name = match.group(1)
        if name not in values:
            raise TemplateError(f"{context}: unknown placeholder '{{{name}}}'")
        return values[name]

    return [_PLACEHOLDER_RE.sub(replace, token) for token in tokens]


@dataclass(frozen=True)
class EncoderProfile:
    """A templated external-encoder invocation.

    ``command_template`` is a token list, never a shell string; tokens may
    embed the placeholders {bitrate_kbps}, {fps_num}, {fps_den}, {fps},
    {width}, {height}, {input}, {output}.
    """

    name: str
    command_template: tuple[str, ...]
    input_mode: InputMode = InputMode.STDIN_RAW
    output_mode: OutputMode = OutputMode.FILE

    def __post_init__(self):
        object.__setattr__(self, "command_template", tuple(self.command_template))
        object.__setattr__(self, "input_mode", InputMode(self.input_mode))
        object.__setattr__(self, "output_mode", OutputMode(self.output_mode))
        if not self.name:
            raise ConfigError("profile name must be non-empty")
        if not self.command_template:
            raise ConfigError(f"profile '{self.name}': command template is empty")
        counts = _count_placeholders(self.command_template)
        if counts.get("bitrate_kbps", 0) != 1:
            raise ConfigError(
                f"profile '{self.name}': template must contain {{bitrate_kbps}} exactly once"
            )
        outputs = counts.get("output", 0)
        if self.output_mode is OutputMode.FILE and outputs != 1:
            raise ConfigError(
                f"profile '{self.name}': template must contain {{output}} exactly once "
                f"(found {outputs})"
            )
        if self.output_mode is OutputMode.STDOUT and outputs != 0:
            raise ConfigError(
                f"profile '{self.name}': {{output}} conflicts with output_mode=stdout"
            )

    @classmethod
    def from_dict(cls, data: Mapping) -> "EncoderProfile":
        try:
            return cls(
                name=data["name"],
                command_template=tuple(data["command_template"]),
                input_mode=InputMode(data.get("input_mode", "stdin_raw")),
                output_mode=OutputMode(data.get("output_mode", "file")),
            )
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"invalid encoder profile: {exc}") from exc

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "command_template": list(self.command_template),
            "input_mode": self.input_mode.value,
            "output_mode": self.output_mode.value,
        }


def render_command(
    profile: EncoderProfile,
    seq: VideoSequence,
    bitrate_kbps,
    *,
    input_path: str | Path | None = None,
    output_path: str | Path | None = None,
) -> list[str]:
    """Substitute every placeholder in the profile's template.

    {fps} renders as an integer when the denominator is 1, else "num/den".
    For piped input modes {input} renders "-" unless a path is given.
    """
    values = {
        "bitrate_kbps": _format_number(bitrate_kbps),
        "fps_num": str(seq.fps_num),
        "fps_den": str(seq.fps_den),
        "fps": str(seq.fps_num) if seq.fps_den == 1 else f"{seq.fps_num}/{seq.fps_den}",
        "width": str(seq.width),
        "height": str(seq.height),
    }
    if input_path is not None:
        values["input"] = str(input_path)
    elif profile.input_mode is not InputMode.FILE:
        values["input"] = "-"
    if output_path is not None:
        values["output"] = str(output_path)
    return _substitute_tokens(profile.command_template, values, f"profile '{profile.name}'")


@dataclass(frozen=True)
class RunRecord:
    """Measurements of one (encoder, sequence, bitrate, mode) execution."""

    profile_name: str
    sequence_short_name: str
    target_bitrate_kbps: float
    mode: RunMode
    wall_time_s: float
    frames_in: int
    throughput_fps: float
    output_size_bytes: int
    achieved_bitrate_kbps: float
    exit_status: int
    pacing: PacingReport | None = None

    def to_dict(self) -> dict:
        return {
            "profile_name": self.profile_name,
            "sequence_short_name": self.sequence_short_name,
            "target_bitrate_kbps": self.target_bitrate_kbps,
            "mode": self.mode.value,
            "wall_time_s": self.wall_time_s,
            "frames_in": self.frames_in,
            "throughput_fps": self.throughput_fps,
            "output_size_bytes": self.output_size_bytes,
            "achieved_bitrate_kbps": self.achieved_bitrate_kbps,
            "exit_status": self.exit_status,
            "pacing": self.pacing.to_dict() if self.pacing else None,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "RunRecord":
        pacing = data.get("pacing")
        return cls(
            profile_name=data["profile_name"],
            sequence_short_name=data["sequence_short_name"],
            target_bitrate_kbps=data["target_bitrate_kbps"],
            mode=RunMode(data["mode"]),
            wall_time_s=data["wall_time_s"],
            frames_in=data["frames_in"],
            throughput_fps=data["throughput_fps"],
            output_size_bytes=data["output_size_bytes"],
            achieved_bitrate_kbps=data["achieved_bitrate_kbps"],
            exit_status=data["exit_status"],
            pacing=PacingReport.from_dict(pacing) if pacing else None,
        )


def achieved_bitrate(output_size_bytes: int, duration_s: float) -> float:
    """Kilobits per second implied by the encoded size (kilobit = 1000 bits)."""
    if duration_s <= 0:
        raise InvalidInputError(f"duration must be positive, got {duration_s}")
    if output_size_bytes < 0:
        raise InvalidInputError(f"output size cannot be negative, got {output_size_bytes}")
    return 8.0 * output_size_bytes / duration_s / 1000.0


def mean_sample_std(values: Sequence[float]) -> tuple[float, float]:
    """Arithmetic mean and sample standard deviation (n-1; 0 for a singleton)."""
    if not values:
        raise EmptyGroupError("no values to aggregate")
    mean = statistics.fmean(values)
    std = statistics.stdev(values) if len(values) > 1 else 0.0
    return mean, std


def throughput_stats(records: Iterable[RunRecord]) -> dict[float, tuple[float, float]]:
    """Per-bitrate (mean, sample std) of throughput across records."""
    groups: dict[float, list[float]] = {}
    for record in records:
        groups.setdefault(record.target_bitrate_kbps, []).append(record.throughput_fps)
    if not groups:
        raise EmptyGroupError("no run records to aggregate")
    return {bitrate: mean_sample_std(values) for bitrate, values in sorted(groups.items())}


class _Drain(threading.Thread):
    """Consumes a child pipe so the child never blocks on a full buffer."""

    def __init__(self, stream, sink_path: Path | None = None, keep_tail: bool = False):
        super().__init__(daemon=True)
        self._stream = stream
        self._sink_path = sink_path
        self._keep_tail = keep_tail
        self._tail = b""
        self.byte_count = 0

    def run(self):
        sink = open(self._sink_path, "wb") if self._sink_path else None
        try:
            while True:
                chunk = self._stream.read(_DRAIN_CHUNK)
                if not chunk:
                    break
                self.byte_count += len(chunk)
                if sink:
                    sink.write(chunk)
                if self._keep_tail:
                    self._tail = (self._tail + chunk)[-_STDERR_TAIL_LIMIT:]
        finally:
            if sink:
                sink.close()
            self._stream.close()

    def tail_text(self) -> str:
        return self._tail.decode("utf-8", "replace")


def _frame_chunks(reader, input_mode: InputMode) -> Iterator[bytes]:
    """One bytes chunk per frame, framed per the encoder's input mode."""
    if input_mode is InputMode.STDIN_Y4M:
        seq = reader.sequence
        header = build_y4m_header(seq.width, seq.height, seq.fps_num, seq.fps_den)
        first = True
        for frame in reader:
            chunk = Y4M_FRAME_MARKER + b"\n" + frame.payload
            if first:
                chunk = header + chunk
                first = False
            yield chunk
    else:
        for frame in reader:
            yield frame.payload


def run_unpaced(
    profile: EncoderProfile,
    seq: VideoSequence,
    bitrate_kbps: float,
    *,
    source_path: str | Path | None = None,
    output_path: str | Path | None = None,
) -> RunRecord:
    """Measure the encoder's maximum speed: frames delivered as fast as consumed.

    Wall time runs from process spawn to exit.
    """
    return _run(profile, seq, bitrate_kbps, RunMode.UNPACED, source_path, output_path)


def run_paced(
    profile: EncoderProfile,
    seq: VideoSequence,
    bitrate_kbps: float,
    *,
    source_path: str | Path | None = None,
    output_path: str | Path | None = None,
) -> RunRecord:
    """Measure the real-time condition: frames delivered at the capture rate.

    Wall time runs from the first frame's deadline to encoder exit, so
    process startup is not charged to pacing. Requires piped input.
    """
    if profile.input_mode is InputMode.FILE:
        raise ConfigError(
            f"profile '{profile.name}': paced mode requires stdin_raw or stdin_y4m input"
        )
    return _run(profile, seq, bitrate_kbps, RunMode.PACED, source_path, output_path)


def _run(profile, seq, bitrate_kbps, mode, source_path, output_path) -> RunRecord:
    source = Path(source_path) if source_path else seq.path
    if source is None:
        raise ConfigError(f"{seq.short_name}: no source path given and none in the manifest")

    temp_output = None
    if output_path is None and profile.output_mode is OutputMode.FILE:
        fd, temp_output = tempfile.mkstemp(suffix=OUTPUT_SUFFIX, prefix="pacebench-")
        os.close(fd)
        output_path = temp_output
    output_path = Path(output_path) if output_path else None

    try:
        return _run_spawned(profile, seq, bitrate_kbps, mode, source, output_path)
    finally:
        if temp_output:
            _unlink_quietly(temp_output)


def _run_spawned(profile, seq, bitrate_kbps, mode, source, output_path) -> RunRecord:
    cmd = render_command(
        profile,
        seq,
        bitrate_kbps,
        input_path=source if profile.input_mode is InputMode.FILE else None,
        output_path=output_path if profile.output_mode is OutputMode.FILE else None,
    )
    log.info("run %s %s %skbps %s: %s", profile.name, seq.short_name,
             _format_number(bitrate_kbps), mode.value, " ".join(cmd))

    piped_input = profile.input_mode is not InputMode.FILE
    spawn_time = time.monotonic()
    try:
        child = subprocess.Popen(
            cmd,
            stdin=subprocess.PIPE if piped_input else subprocess.DEVNULL,
            stdout=subprocess.PIPE,
            stderr=subprocess.PIPE,
            bufsize=0,
        )
    except OSError as exc:
        raise EncoderRunError(f"failed to spawn '{cmd[0]}': {exc}") from exc

    stdout_sink = output_path if profile.output_mode is OutputMode.STDOUT else None
    stdout_drain = _Drain(child.stdout, sink_path=stdout_sink)
    stderr_drain = _Drain(child.stderr, keep_tail=True)
    stdout_drain.start()
    stderr_drain.start()

    frames_in = 0
    pacing_report: PacingReport | None = None
    feed_error: BaseException | None = None
    try:
        if piped_input:
            reader = open_frame_reader(source, seq)
            try:
                chunks = _frame_chunks(reader, profile.input_mode)
                if mode is RunMode.PACED:
                    try:
                        pacing_report = pacer.run_paced(
                            chunks, child.stdin, seq.fps_num, seq.fps_den
                        )
                        frames_in = pacing_report.frames_sent
                    except DeliveryAbortedError as exc:
                        pacing_report = exc.pacing_report
                        frames_in = pacing_report.frames_sent if pacing_report else 0
                        feed_error = exc
                        try:
                            child.stdin.close()
                        except OSError:
                            pass
                else:
                    try:
                        for chunk in chunks:
                            write_all(child.stdin, chunk)
                            frames_in += 1
                        child.stdin.close()
                    except (BrokenPipeError, OSError) as exc:
                        feed_error = exc
                        try:
                            child.stdin.close()
                        except OSError:
                            pass
            finally:
                reader.close()
        else:
            frames_in = seq.frame_count
        child.wait()
    except BaseException:
        child.kill()
        child.wait()
        raise
    finally:
        exit_time = time.monotonic()
        stdout_drain.join()
        stderr_drain.join()

    exit_status = child.returncode
    if exit_status != 0:
        raise EncoderRunError(
            f"encoder '{profile.name}' exited with status {exit_status}",
            stderr_tail=stderr_drain.tail_text(),
            exit_status=exit_status,
        )

    if mode is RunMode.PACED and pacing_report is not None:
        wall_time = exit_time - pacing_report.start_epoch
    else:
        wall_time = exit_time - spawn_time

    if feed_error is not None and mode is RunMode.UNPACED:
        raise EncoderRunError(
            f"encoder '{profile.name}' closed its input pipe after {frames_in} frames",
            stderr_tail=stderr_drain.tail_text(),
            exit_status=exit_status,
        )

    if profile.output_mode is OutputMode.STDOUT:
        output_size = stdout_drain.byte_count
    else:
        try:
            output_size = os.path.getsize(output_path)
        except OSError as exc:
            raise EncoderRunError(
                f"encoder '{profile.name}' produced no output file: {exc}",
                stderr_tail=stderr_drain.tail_text(),
            ) from exc

    record = RunRecord(
        profile_name=profile.name,
        sequence_short_name=seq.short_name,
        target_bitrate_kbps=float(bitrate_kbps),
        mode=mode,
        wall_time_s=wall_time,
        frames_in=frames_in,
        throughput_fps=frames_in / wall_time if wall_time > 0 else 0.0,
        output_size_bytes=output_size,
        achieved_bitrate_kbps=achieved_bitrate(output_size, seq.duration_s),
        exit_status=exit_status,
        pacing=pacing_report,
    )

    if feed_error is not None:  # paced: encoder quit before consuming everything
        raise DeliveryAbortedError(
            f"encoder '{profile.name}' stopped reading after {frames_in} of "
            f"{seq.frame_count} frames",
            pacing_report=pacing_report,
            run_record=record,
        ) from feed_error
    return record


def _unlink_quietly(path) -> None:
    try:
        os.unlink(path)
    except OSError:
        pass


@dataclass(frozen=True)
class BenchmarkConfig:
    """One benchmark campaign: profiles x sequences x bitrates x modes."""

    profiles: tuple[EncoderProfile, ...]
    sequences: tuple[str, ...]
    bitrates_kbps: tuple[float, ...]
    modes: tuple[RunMode, ...]
    output_dir: Path
    repetitions: int = 1
    manifest: Path | None = None
    metric_command: tuple[str, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "profiles", tuple(self.profiles))
        object.__setattr__(self, "sequences", tuple(self.sequences))
        object.__setattr__(self, "bitrates_kbps", tuple(float(b) for b in self.bitrates_kbps))
        object.__setattr__(self, "modes", tuple(RunMode(m) for m in self.modes))
        object.__setattr__(self, "output_dir", Path(self.output_dir))
        if self.manifest is not None:
            object.__setattr__(self, "manifest", Path(self.manifest))
        if self.metric_command is not None:
            object.__setattr__(self, "metric_command", tuple(self.metric_command))
        if not self.profiles:
            raise ConfigError("config needs at least one encoder profile")
        names = [p.name for p in self.profiles]
        if len(set(names)) != len(names):
            raise ConfigError("profile names must be unique within a benchmark config")
        if not self.sequences:
            raise ConfigError("config needs at least one sequence")
        rates = self.bitrates_kbps
        if not rates:
            raise ConfigError("bitrates_kbps must be non-empty")
        if any(b <= 0 for b in rates):
            raise ConfigError("bitrates_kbps must be strictly positive")
        if any(b1 <= b0 for b0, b1 in zip(rates, rates[1:])):
            raise ConfigError("bitrates_kbps must be strictly increasing")
        if not self.modes or len(set(self.modes)) != len(self.modes):
            raise ConfigError("modes must be a non-empty set of paced/unpaced")
        if self.repetitions < 1:
            raise ConfigError(f"repetitions must be >= 1, got {self.repetitions}")


def load_benchmark_config(path: str | Path) -> BenchmarkConfig:
    """Load a benchmark config; relative paths resolve against the config file."""
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    try:
        profiles = tuple(EncoderProfile.from_dict(p) for p in data["profiles"])
        config = BenchmarkConfig(
            profiles=profiles,
            sequences=tuple(data["sequences"]),
            bitrates_kbps=tuple(data["bitrates_kbps"]),
            modes=tuple(data.get("modes", ["paced", "unpaced"])),
            output_dir=Path(data["output_dir"]),
            repetitions=int(data.get("repetitions", 1)),
            manifest=Path(data["manifest"]) if data.get("manifest") else None,
            metric_command=tuple(data["metric_command"]) if data.get("metric_command") else None,
        )
    except KeyError as exc:
        raise ConfigError(f"{path}: missing key {exc}") from exc
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc

    def resolve(p: Path | None) -> Path | None:
        if p is None or p.is_absolute():
            return p
        return path.parent / p

    object.__setattr__(config, "output_dir", resolve(config.output_dir))
    object.__setattr__(config, "manifest", resolve(config.manifest))
    return config


def run_basename(profile_name: str, seq_name: str, bitrate_kbps, mode: RunMode, rep: int) -> str:
    return f"{profile_name}__{seq_name}__{_format_number(bitrate_kbps)}__{mode.value}__rep{rep}"


def save_run_record(record: RunRecord, path: str | Path) -> None:
    atomic_write_text(path, json.dumps(record.to_dict(), indent=2, sort_keys=True) + "\n")


def load_run_record(path: str | Path) -> RunRecord:
    with open(path, "r", encoding="utf-8") as fh:
        return RunRecord.from_dict(json.load(fh))


def runs_csv_text(records: Sequence[RunRecord]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(RUNS_CSV_COLUMNS)
    for r in records:
        writer.writerow([
            r.profile_name,
            r.sequence_short_name,
            repr(r.target_bitrate_kbps),
            r.mode.value,
            repr(r.wall_time_s),
            r.frames_in,
            repr(r.throughput_fps),
            r.output_size_bytes,
            repr(r.achieved_bitrate_kbps),
        ])
    return buf.getvalue()


def write_runs_csv(records: Sequence[RunRecord], path: str | Path) -> None:
    atomic_write_text(path, runs_csv_text(records))


def run_metric_tool(
    command_template: Sequence[str],
    *,
    reference: str | Path,
    distorted: str | Path,
    seq: VideoSequence,
    report_out: str | Path,
) -> None:
    """Invoke an external quality-metric tool via the shared templating."""
    values = {
        "reference": str(reference),
        "distorted": str(distorted),
        "width": str(seq.width),
        "height": str(seq.height),
        "fps": str(seq.fps_num) if seq.fps_den == 1 else f"{seq.fps_num}/{seq.fps_den}",
        "fps_num": str(seq.fps_num),
        "fps_den": str(seq.fps_den),
        "report_out": str(report_out),
    }
    cmd = _substitute_tokens(command_template, values, "metric command")
    try:
        result = subprocess.run(cmd, capture_output=True, text=True)
    except OSError as exc:
        raise EncoderRunError(f"failed to spawn metric tool '{cmd[0]}': {exc}") from exc
    if result.returncode != 0:
        raise EncoderRunError(
            f"metric tool exited with status {result.returncode}",
            stderr_tail=result.stderr[-_STDERR_TAIL_LIMIT:],
            exit_status=result.returncode,
        )


def run_benchmark(
    config: BenchmarkConfig,
    sequences: Mapping[str, VideoSequence],
    *,
    modes: Sequence[RunMode] | None = None,
    only: Mapping[str, str] | None = None,
) -> list[RunRecord]:
    """Execute the campaign, persisting one JSON record per run plus runs.csv.

    ``only`` optionally restricts to one profile and/or sequence. Runs are
    strictly sequential; paced timing needs an otherwise idle machine.
    """
    selected_modes = tuple(modes) if modes else config.modes
    only = dict(only or {})
    unknown = set(only) - {"profile", "seq"}
    if unknown:
        raise ConfigError(f"unknown --only key(s): {', '.join(sorted(unknown))}")

    out_dir = config.output_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    records: list[RunRecord] = []
    for profile in config.profiles:
        if only.get("profile") and profile.name != only["profile"]:
            continue
        for seq_name in config.sequences:
            if only.get("seq") and seq_name != only["seq"]:
                continue
            seq = sequences.get(seq_name)
            if seq is None:
                raise ConfigError(f"sequence '{seq_name}' is not in the manifest")
            for bitrate in config.bitrates_kbps:
                for mode in selected_modes:
                    for rep in range(config.repetitions):
                        base = run_basename(profile.name, seq_name, bitrate, mode, rep)
                        output_path = out_dir / (base + OUTPUT_SUFFIX)
                        if mode is RunMode.PACED:
                            record = run_paced(profile, seq, bitrate, output_path=output_path)
                        else:
                            record = run_unpaced(profile, seq, bitrate, output_path=output_path)
                        save_run_record(record, out_dir / (base + RECORD_SUFFIX))
                        if config.metric_command:
                            run_metric_tool(
                                config.metric_command,
                                reference=seq.path,
                                distorted=output_path,
                                seq=seq,
                                report_out=out_dir / (base + QUALITY_SUFFIX),
                            )
                        records.append(record)
    if not records:
        raise ConfigError("the --only filter matched no runs")
    write_runs_csv(records, out_dir / "runs.csv")
    return records
