"""End-to-end prediction: audio-conditioned mask, hand candidates, and
collision verification, with the mode switches the evaluation variants
and baselines need."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import torch

from collisionseg.audio import AudioClip
from collisionseg.config import RunConfig
from collisionseg.encoders import AttentivePool, AudioProjection, EncoderBundle
from collisionseg.evaluation import baseline_centre
from collisionseg.manifest import SampleRecord, decode_gt_masks
from collisionseg.masks import BinaryMask, Image, binarize
from collisionseg.model import infer, infer_refined
from collisionseg.sampling import MediaStore
from collisionseg.verify import (
    BoxFillSegmenter,
    BoxPromptSegmenter,
    CandidateSet,
    CollisionPrediction,
    HandObjectDetector,
    NullDetector,
    OracleDetector,
    OracleSegmenter,
    bbox_of_peak_region,
    detect_hands,
    refine_with_segmenter,
    sanitize_box,
    verify_collision,
)


@dataclass(frozen=True)
class VariantFlags:
    """Ablation switches for the prediction pipeline."""

    use_crop: bool = True
    use_sam_av: bool = True
    use_hoi: bool = True


# The cumulative ablation chain: each variant removes one more component.
ABLATION_VARIANTS: tuple[tuple[str, VariantFlags], ...] = (
    ("full", VariantFlags()),
    ("wo_sam_av", VariantFlags(use_sam_av=False)),
    ("wo_sam_av_crop", VariantFlags(use_sam_av=False, use_crop=False)),
    ("wo_sam_av_crop_hoi", VariantFlags(use_sam_av=False, use_crop=False, use_hoi=False)),
)


def build_detector(cfg: RunConfig) -> HandObjectDetector:
    return OracleDetector() if cfg.detector == "oracle" else NullDetector()


def build_segmenter(cfg: RunConfig) -> BoxPromptSegmenter:
    return OracleSegmenter() if cfg.segmenter == "oracle" else BoxFillSegmenter()


class CollisionPipeline:
    """Binds a trained bundle with detector/segmenter adapters.

    The pipeline invokes adapters strictly serially, so adapters that do
    not declare concurrency support are safe; callers that parallelise
    across samples must shard pipelines per worker unless the adapter
    capabilities say otherwise.
    """

    def __init__(
        self,
        bundle: EncoderBundle,
        cfg: RunConfig,
        detector: Optional[HandObjectDetector] = None,
        segmenter: Optional[BoxPromptSegmenter] = None,
    ):
        self.bundle = bundle
        self.cfg = cfg
        self.detector = detector if detector is not None else build_detector(cfg)
        self.segmenter = segmenter if segmenter is not None else build_segmenter(cfg)

    def av_soft_mask(self, image: Image, clip: AudioClip, use_crop: bool = True):
        if use_crop:
            return infer_refined(image, clip, self.bundle, self.cfg)
        return infer(image, clip, self.bundle, self.cfg)

    def predict(
        self,
        image: Image,
        clip: AudioClip,
        record: Optional[SampleRecord] = None,
        strategy: Optional[str] = None,
        flags: VariantFlags = VariantFlags(),
    ) -> CollisionPrediction:
        strategy = strategy or self.cfg.strategy
        soft = self.av_soft_mask(image, clip, flags.use_crop)
        peak_box = bbox_of_peak_region(soft)
        if flags.use_sam_av:
            m_av: Optional[BinaryMask] = refine_with_segmenter(
                image, peak_box, self.segmenter, record
            )
        else:
            m_av = binarize(soft, self.cfg.mask_threshold)
        if m_av is not None and m_av.is_empty():
            m_av = None
        fallback = peak_box.to_mask(image.height, image.width)

        hands: dict[str, BinaryMask] = {}
        needs_hands = flags.use_hoi and strategy != "av"
        if needs_hands:
            hoi = detect_hands(image, self.detector, record)
            for hand, box in (("left", hoi.left), ("right", hoi.right)):
                if box is not None:
                    mask = refine_with_segmenter(image, box, self.segmenter, record)
                    if not mask.is_empty():
                        hands[hand] = mask

        if strategy == "verify":
            if not flags.use_hoi:
                return self._single(m_av, fallback)
            if m_av is None and not hands:
                return CollisionPrediction(masks=(fallback,), provenance=("av",))
            return verify_collision(
                CandidateSet(m_av=m_av, m_left=hands.get("left"), m_right=hands.get("right")),
                self.cfg.alpha,
                self.cfg.beta,
            )
        if strategy == "av":
            return self._single(m_av, fallback)
        if strategy in ("right", "left"):
            other = "left" if strategy == "right" else "right"
            for source in (strategy, other):
                if source in hands:
                    return CollisionPrediction(masks=(hands[source],), provenance=(source,))
            return self._single(m_av, fallback)
        if strategy == "right-left":
            return self._pair_or_single(hands.get("right"), "right", hands.get("left"), "left", m_av, fallback)
        if strategy in ("right-av", "left-av"):
            hand = strategy.split("-")[0]
            return self._pair_or_single(hands.get(hand), hand, m_av, "av", m_av, fallback)
        if strategy == "touch":
            contact_mask: Optional[BinaryMask] = None
            try:
                raw = self.detector.contact_box(image, record)
            except NotImplementedError:
                raw = None
            if raw is not None:
                box = sanitize_box(raw, image.height, image.width)
                if box is not None:
                    mask = refine_with_segmenter(image, box, self.segmenter, record)
                    if not mask.is_empty():
                        contact_mask = mask
            return self._pair_or_single(hands.get("right"), "right", contact_mask, "av", m_av, fallback)
        raise ValueError(f"unknown strategy {strategy!r}")

    @staticmethod
    def _single(m_av: Optional[BinaryMask], fallback: BinaryMask) -> CollisionPrediction:
        mask = m_av if m_av is not None else fallback
        return CollisionPrediction(masks=(mask,), provenance=("av",))

    def _pair_or_single(self, a, tag_a, b, tag_b, m_av, fallback) -> CollisionPrediction:
        if a is not None and b is not None:
            return CollisionPrediction(masks=(a, b), provenance=(tag_a, tag_b))
        if a is not None:
            return CollisionPrediction(masks=(a,), provenance=(tag_a,))
        if b is not None:
            return CollisionPrediction(masks=(b,), provenance=(tag_b,))
        return self._single(m_av, fallback)


def randomized_audio_branch(bundle: EncoderBundle, seed: int) -> EncoderBundle:
    """Fresh randomly-seeded projection/pooling, frozen encoders untouched.

    This is the untrained reference predictor: the conditioning token is
    produced by a random projection of backbone features.
    """
    with torch.random.fork_rng():
        torch.manual_seed(seed)
        in_dim = bundle.audio_backbone.out_dim
        projection = AudioProjection(in_dim, bundle.audio_projection.proj.out_features)
        pool = AttentivePool(bundle.audio_pool.query.shape[0])
    return replace_audio_branch(bundle, projection, pool)


def replace_audio_branch(
    bundle: EncoderBundle, projection: AudioProjection, pool: AttentivePool
) -> EncoderBundle:
    return EncoderBundle(
        visual=bundle.visual,
        text=bundle.text,
        decoder=bundle.decoder,
        audio_backbone=bundle.audio_backbone,
        audio_projection=projection,
        audio_pool=pool,
        image_size=bundle.image_size,
        freeze_audio_backbone=bundle.freeze_audio_backbone,
    )


def make_record_predictor(
    pipeline: CollisionPipeline,
    store: MediaStore,
    strategy: Optional[str] = None,
    flags: VariantFlags = VariantFlags(),
) -> Callable[[SampleRecord], CollisionPrediction]:
    """Predictor over manifest records: loads the annotated frame and the
    clip audio, then runs the pipeline."""

    def predict(record: SampleRecord) -> CollisionPrediction:
        frame_index = record.eval_frame_index or 0
        image = store.load_frame(record, frame_index)
        clip = store.load_audio(record)
        return pipeline.predict(image, clip, record=record, strategy=strategy, flags=flags)

    return predict


def make_centre_predictor() -> Callable[[SampleRecord], CollisionPrediction]:
    def predict(record: SampleRecord) -> CollisionPrediction:
        h, w = record.frame_size  # type: ignore[misc]
        return baseline_centre(h, w)

    return predict


def make_oracle_predictor() -> Callable[[SampleRecord], CollisionPrediction]:
    def predict(record: SampleRecord) -> CollisionPrediction:
        masks = decode_gt_masks(record)
        return CollisionPrediction(
            masks=tuple(masks), provenance=tuple("av" for _ in masks)
        )

    return predict
