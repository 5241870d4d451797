"""
Rate-distortion evaluation on actually decoded streams, and RD-curve export
"""
import os
import glob
import json
import logging
from dataclasses import dataclass, asdict
from typing import List, NamedTuple, Optional, Sequence

import pandas as pd
import plotly.graph_objects as go
import torch
from plotly.utils import PlotlyJSONEncoder

from ssfcodec.checkpoint import model_digest
from ssfcodec.codec.bitstream import HEADER_SIZE, LENGTH_PREFIX
from ssfcodec.codec.models import VideoCodec
from ssfcodec.codec.pipeline import GopPlan, build_coding_tables, encode_sequence, iter_decode
from ssfcodec.data import SequenceDataset
from ssfcodec.errors import DataError, ReconstructionMismatchError
from ssfcodec.metrics import PSNR_CAP_DB, capped_psnr, psnr

logger = logging.getLogger(__name__)

POINT_COLUMNS = ['family', 'lmbda', 'bpp', 'psnr_db', 'digest', 'frames', 'bits', 'estimated_bpp']


@dataclass
class RdPoint:
    lmbda: Optional[float]
    bpp: float
    psnr_db: float
    digest: str
    family: str = ''
    frames: int = 0
    bits: int = 0
    estimated_bpp: Optional[float] = None

    def to_dict(self):
        return asdict(self)


class EvalResult(NamedTuple):
    point: RdPoint
    frames: pd.DataFrame


def eval_model(codec: VideoCodec, dataset: SequenceDataset, lmbda: Optional[float] = None,
               include_header: bool = True, estimate: bool = False,
               psnr_cap: float = PSNR_CAP_DB) -> EvalResult:
    """
    Compress every test clip, decode the stream and score the decoded frames.
    Any difference between encoder- and decoder-side reconstructions aborts.
    """
    clips = dataset.with_mode('test').clips()
    plan = GopPlan(min(dataset.gop_size, 255))
    tables = build_coding_tables(codec)
    digest = model_digest(codec)

    rows = []
    total_bits = 0
    estimated_bits = 0.0
    frame_offset = 0
    for clip_index, clip in enumerate(clips):
        encoded = encode_sequence(clip, codec, plan, tables, digest)
        data = encoded.bitstream.to_bytes()
        chunk_bits = _frame_bits(encoded.bitstream)
        total_bits += 8 * (len(data) if include_header else len(data) - HEADER_SIZE)
        estimated_bits += encoded.estimated_bits

        for index, decoded in enumerate(iter_decode(data, codec, tables)):
            if not torch.equal(decoded, encoded.reconstructions[index]):
                difference = float((decoded - encoded.reconstructions[index]).abs().max())
                raise ReconstructionMismatchError(
                    f"decoded frame differs from the encoder's reconstruction (max abs diff {difference:.3g}) "
                    f"in clip {clip_index}", frame_offset + index
                )
            rows.append({
                'clip': clip_index,
                'frame': frame_offset + index,
                'type': 'I' if plan.is_intra(index) else 'P',
                'bits': chunk_bits[index],
                'psnr_db': capped_psnr(psnr(clip[index], decoded), psnr_cap),
            })
        frame_offset += clip.shape[0]

    if not rows:
        raise DataError("Dataset holds no frames to evaluate")
    pixels = frame_offset * dataset.height * dataset.width
    table = pd.DataFrame(rows)
    point = RdPoint(
        lmbda=lmbda,
        bpp=total_bits / pixels,
        psnr_db=float(table['psnr_db'].mean()),
        digest=digest.hex(),
        family=codec.family,
        frames=frame_offset,
        bits=total_bits,
        estimated_bpp=estimated_bits / pixels if estimate else None,
    )
    logger.info(f"{codec.family} lambda={lmbda}: {point.bpp:.4f} bpp, {point.psnr_db:.2f} dB over {frame_offset} frames")
    return EvalResult(point, table)


def _frame_bits(stream) -> List[int]:
    """Coded bits per frame, length prefixes included"""
    bits = {}
    for (frame_index, _), chunk in zip(stream.layout(), stream.chunks):
        bits[frame_index] = bits.get(frame_index, 0) + 8 * (LENGTH_PREFIX.size + len(chunk))
    return [bits[i] for i in sorted(bits)]


def write_report(result: EvalResult, path: str) -> str:
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    report = {'point': result.point.to_dict(), 'frames': result.frames.to_dict(orient='records')}
    with open(path, 'w') as f:
        json.dump(report, f, indent=2)
    return path


def load_points(pattern: str) -> List[RdPoint]:
    """RD points from every eval report (or points JSON) matching the glob, in sorted path order"""
    paths = sorted(glob.glob(pattern))
    if not paths:
        raise DataError(f"No reports match {pattern}")
    points = []
    for path in paths:
        try:
            with open(path) as f:
                content = json.load(f)
        except (OSError, ValueError) as e:
            raise DataError(f"Could not read report {path}: {e}")
        entries = content if isinstance(content, list) else [content.get('point', content)]
        for entry in entries:
            try:
                points.append(RdPoint(**entry))
            except TypeError as e:
                raise DataError(f"Report {path} is not an RD point: {e}")
    return points


def points_table(points: Sequence[RdPoint]) -> pd.DataFrame:
    return pd.DataFrame([p.to_dict() for p in points], columns=POINT_COLUMNS)


def rd_figure(points: Sequence[RdPoint]) -> go.Figure:
    """One line per family, in order of first appearance, points sorted by bpp"""
    fig = go.Figure()
    families = list(dict.fromkeys(p.family for p in points))
    for family in families:
        series = sorted((p for p in points if p.family == family), key=lambda p: p.bpp)
        fig.add_trace(go.Scatter(
            x=[p.bpp for p in series],
            y=[p.psnr_db for p in series],
            mode='lines+markers',
            name=f"SSF-{family}",
        ))
    fig.update_layout(
        title='Rate-distortion',
        xaxis_title='bpp',
        yaxis_title='PSNR [dB]',
        hovermode='x unified',
        font=dict(family="Arial", size=12),
        height=400
    )
    return fig


def emit_rd_curve(points: Sequence[RdPoint], out_prefix: str, plot: bool = True) -> List[str]:
    """<prefix>.csv and <prefix>.json with identical content; plot as HTML, figure JSON and PNG when possible"""
    directory = os.path.dirname(os.path.abspath(out_prefix))
    os.makedirs(directory, exist_ok=True)
    table = points_table(points)
    written = [f"{out_prefix}.csv", f"{out_prefix}.json"]
    table.to_csv(written[0], index=False)
    with open(written[1], 'w') as f:
        json.dump([p.to_dict() for p in points], f, indent=2)
    if not plot:
        return written

    fig = rd_figure(points)
    fig.write_html(f"{out_prefix}.html")
    with open(f"{out_prefix}.fig.json", 'w') as f:
        f.write(json.dumps(fig, cls=PlotlyJSONEncoder))
    written += [f"{out_prefix}.html", f"{out_prefix}.fig.json"]
    try:
        fig.write_image(f"{out_prefix}.png")
        written.append(f"{out_prefix}.png")
    except Exception as e:
        logger.warning(f"Static plot image skipped: {e}")
    return written
