"""Shared helpers: synthetic sources, sequences, and mock encoder profiles."""

from __future__ import annotations

import sys
from pathlib import Path

import pytest

from pacebench.dataset import VideoSequence, build_y4m_header
from pacebench.harness import EncoderProfile


def make_sequence(
    *,
    short_name: str = "SY25",
    name: str = "synthetic",
    fps_num: int = 25,
    fps_den: int = 1,
    width: int = 2,
    height: int = 2,
    frame_count: int = 10,
    path: Path | None = None,
    duration_s: float | None = None,
) -> VideoSequence:
    return VideoSequence(
        name=name,
        short_name=short_name,
        fps_num=fps_num,
        fps_den=fps_den,
        width=width,
        height=height,
        frame_count=frame_count,
        duration_s=duration_s,
        path=path,
    )


def frame_payload(seq: VideoSequence, index: int) -> bytes:
    return bytes([index % 251]) * seq.frame_bytes


def write_raw_source(path: Path, seq: VideoSequence) -> Path:
    with open(path, "wb") as fh:
        for k in range(seq.frame_count):
            fh.write(frame_payload(seq, k))
    return path


def write_y4m_source(path: Path, seq: VideoSequence) -> Path:
    with open(path, "wb") as fh:
        fh.write(build_y4m_header(seq.width, seq.height, seq.fps_num, seq.fps_den))
        for k in range(seq.frame_count):
            fh.write(b"FRAME\n")
            fh.write(frame_payload(seq, k))
    return path


def mock_template(*extra: str) -> tuple[str, ...]:
    return (
        sys.executable,
        "-m",
        "pacebench.mock_encoder",
        "--width", "{width}",
        "--height", "{height}",
        "--kbps", "{bitrate_kbps}",
        "--fps", "{fps}",
        *extra,
    )


def mock_profile(
    name: str = "mock",
    *extra: str,
    input_mode: str = "stdin_raw",
    output_mode: str = "file",
) -> EncoderProfile:
    template = mock_template(*extra)
    if output_mode == "file":
        template = template + ("--output", "{output}")
    else:
        template = template + ("--output", "-")
    return EncoderProfile(
        name=name,
        command_template=template,
        input_mode=input_mode,
        output_mode=output_mode,
    )


@pytest.fixture
def tiny_seq(tmp_path: Path) -> VideoSequence:
    seq = make_sequence(frame_count=8, path=tmp_path / "tiny.yuv")
    write_raw_source(seq.path, seq)
    return seq
