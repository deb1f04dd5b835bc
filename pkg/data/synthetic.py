"""
Synthetic visible/infrared person dataset with known identity and style factors.

Every identity owns a fixed attribute vector (gender, age, hair, upper and lower
clothing, accessory) plus a stripe code; each image paints those attributes as
coloured blocks and then applies a modality transform and per-image style
(illumination offset, contrast gain, sensor noise).

Upper-clothing colours are isoluminant, so the infrared grayscale collapse
removes them completely while the other attributes survive as luminance and
shape cues.
"""
import json
import logging
import os
from dataclasses import dataclass, field, asdict

import numpy as np

from config.settings import (
    NUM_TRAIN_IDS, NUM_TEST_IDS, IMAGES_PER_MODALITY, IMAGE_HEIGHT, IMAGE_WIDTH,
    DATASET_SEED, IR_CHROMA_BOUND, VISIBLE_CAMERAS, INFRARED_CAMERAS, INDOOR_CAMERAS
)
from utils.exceptions import ConfigurationError, MissingArtifactError

logger = logging.getLogger('dsfad')

VISIBLE = 'visible'
INFRARED = 'infrared'
MODALITIES = (VISIBLE, INFRARED)
SPLITS = ('train', 'test')

ATTRIBUTE_NAMES = ('gender', 'age', 'hair', 'upper', 'lower', 'accessory')
ATTRIBUTE_VOCAB = {
    'gender': ('man', 'woman'),
    'age': ('young', 'middle-aged', 'senior'),
    'hair': ('dark', 'blond', 'red', 'gray'),
    'upper': ('gray-shirt', 'red-jacket', 'blue-sweater', 'green-t-shirt', 'purple-blouse', 'orange-coat'),
    'lower': ('khaki-shorts', 'blue-jeans', 'black-trousers', 'gray-skirt', 'brown-pants'),
    'accessory': ('watch', 'backpack', 'handbag', 'hat', 'scarf'),
}

# Per-modality style ranges: (low, high) for illumination offset and contrast gain
STYLE_RANGES = {
    VISIBLE: {'illumination': (-0.15, 0.15), 'contrast': (0.7, 1.3)},
    INFRARED: {'illumination': (-0.25, 0.05), 'contrast': (0.5, 1.1)},
}
NOISE_SIGMA = 0.02
LUMA = np.array([0.299, 0.587, 0.114])
BACKGROUND = 0.35


def _isoluminant(direction, luminance=0.5, saturation=0.35):
    direction = np.asarray(direction, dtype=np.float64)
    return luminance + saturation * (direction - LUMA @ direction)


UPPER_COLORS = {
    'gray-shirt': _isoluminant((0.0, 0.0, 0.0)),
    'red-jacket': _isoluminant((1.0, -0.5, -0.5)),
    'blue-sweater': _isoluminant((-0.5, -0.5, 1.0)),
    'green-t-shirt': _isoluminant((-0.5, 1.0, -0.5)),
    'purple-blouse': _isoluminant((0.6, -0.6, 0.6)),
    'orange-coat': _isoluminant((1.0, 0.2, -1.0)),
}
HAIR_COLORS = {
    'dark': np.array([0.10, 0.08, 0.07]),
    'blond': np.array([0.90, 0.80, 0.45]),
    'red': np.array([0.70, 0.30, 0.15]),
    'gray': np.array([0.62, 0.62, 0.62]),
}
LOWER_COLORS = {
    'khaki-shorts': np.array([0.76, 0.69, 0.50]),
    'blue-jeans': np.array([0.20, 0.30, 0.55]),
    'black-trousers': np.array([0.08, 0.08, 0.10]),
    'gray-skirt': np.array([0.55, 0.55, 0.55]),
    'brown-pants': np.array([0.45, 0.30, 0.15]),
}
SKIN_TONES = {
    'young': np.array([0.95, 0.80, 0.70]),
    'middle-aged': np.array([0.82, 0.66, 0.55]),
    'senior': np.array([0.70, 0.58, 0.52]),
}
ACCESSORY_COLOR = np.array([0.22, 0.22, 0.25])
SHORT_LOWER = ('khaki-shorts', 'gray-skirt')
PATTERN_BITS = 4


@dataclass(frozen=True)
class DatasetSpec:
    """Dimensions and seed of a synthetic dataset."""
    num_train_ids: int = NUM_TRAIN_IDS
    num_test_ids: int = NUM_TEST_IDS
    images_per_modality: int = IMAGES_PER_MODALITY
    height: int = IMAGE_HEIGHT
    width: int = IMAGE_WIDTH
    seed: int = DATASET_SEED

    def validate(self):
        """Raise ConfigurationError when the spec violates its preconditions."""
        problems = []
        if self.num_train_ids + self.num_test_ids < 2 or self.num_train_ids < 0 or self.num_test_ids < 0:
            problems.append(f"need at least 2 identities, got {self.num_train_ids} train + {self.num_test_ids} test")
        if self.images_per_modality < 2:
            problems.append(f"images_per_modality must be >= 2, got {self.images_per_modality}")
        if self.height < 16 or self.width < 16:
            problems.append(f"image size must be at least 16x16, got {self.height}x{self.width}")
        if problems:
            message = "Invalid dataset spec: " + '; '.join(problems)
            logger.error(message)
            raise ConfigurationError(message)


@dataclass(frozen=True)
class Identity:
    """A synthetic pedestrian: label within its split, attribute indices and stripe code."""
    label: int
    attributes: tuple
    split: str = 'train'
    pattern: int = 0

    def attribute_values(self):
        """Map attribute name to its vocabulary value."""
        return {name: ATTRIBUTE_VOCAB[name][index] for name, index in zip(ATTRIBUTE_NAMES, self.attributes)}

    @classmethod
    def from_values(cls, label, values, split='train', pattern=0):
        attributes = tuple(ATTRIBUTE_VOCAB[name].index(values[name]) for name in ATTRIBUTE_NAMES)
        return cls(label=label, attributes=attributes, split=split, pattern=pattern)


@dataclass(frozen=True)
class StyleFactors:
    illumination: float
    contrast: float
    noise_seed: int


@dataclass
class ImageRecord:
    """One rendered image with its ground-truth factors."""
    pixels: np.ndarray
    modality: str
    identity: Identity
    camera: int
    style: StyleFactors
    index: int

    @property
    def split(self):
        return self.identity.split

    @property
    def key(self):
        return f"{self.identity.split}_{self.identity.label}_{self.modality}_{self.index}"

    @property
    def indoor(self):
        return self.camera in INDOOR_CAMERAS


@dataclass
class Dataset:
    spec: DatasetSpec
    identities: list
    records: list
    _index: dict = field(default=None, init=False, repr=False, compare=False)

    def split_records(self, split):
        return [r for r in self.records if r.split == split]

    def split_identities(self, split):
        return [i for i in self.identities if i.split == split]

    def records_of(self, split, label, modality):
        """Records of one identity in one modality, ordered by image index."""
        if self._index is None:
            index = {}
            for record in self.records:
                index.setdefault((record.split, record.identity.label, record.modality), []).append(record)
            self._index = index
        return self._index.get((split, label, modality), [])

    def record_by_key(self, key):
        for record in self.records:
            if record.key == key:
                return record
        raise KeyError(key)


def _draw_identities(spec, rng):
    identities = []
    for split, count in (('train', spec.num_train_ids), ('test', spec.num_test_ids)):
        for label in range(count):
            attributes = tuple(int(rng.integers(len(ATTRIBUTE_VOCAB[name]))) for name in ATTRIBUTE_NAMES)
            pattern = int(rng.integers(2 ** PATTERN_BITS))
            identities.append(Identity(label=label, attributes=attributes, split=split, pattern=pattern))
    return identities


def render_identity(identity, height, width):
    """
    Paint an identity's attributes as geometric colour blocks.

    Args:
        identity (Identity): The pedestrian to draw
        height (int): Image height in pixels
        width (int): Image width in pixels

    Returns:
        np.ndarray: Clean RGB canvas [3, H, W] in [0, 1], before modality and style
    """
    values = identity.attribute_values()
    canvas = np.full((3, height, width), BACKGROUND)
    H, W = height, width
    cx = W // 2

    def paint(r0, r1, c0, c1, color):
        r0, r1 = max(0, int(round(r0))), min(H, int(round(r1)))
        c0, c1 = max(0, int(round(c0))), min(W, int(round(c1)))
        if r1 > r0 and c1 > c0:
            canvas[:, r0:r1, c0:c1] = np.asarray(color)[:, None, None]

    half_torso = (0.30 if values['gender'] == 'man' else 0.24) * W
    head_half = 0.13 * W
    skin = SKIN_TONES[values['age']]

    # Head and hair
    paint(0.06 * H, 0.20 * H, cx - head_half, cx + head_half, skin)
    paint(0.03 * H, 0.09 * H, cx - head_half, cx + head_half, HAIR_COLORS[values['hair']])
    if values['gender'] == 'woman':
        paint(0.09 * H, 0.24 * H, cx - head_half - 0.06 * W, cx - head_half, HAIR_COLORS[values['hair']])
        paint(0.09 * H, 0.24 * H, cx + head_half, cx + head_half + 0.06 * W, HAIR_COLORS[values['hair']])

    # Torso with the identity's stripe code modulating brightness
    torso_top, torso_bottom = 0.21 * H, 0.55 * H
    base = UPPER_COLORS[values['upper']]
    band = (torso_bottom - torso_top) / PATTERN_BITS
    for bit in range(PATTERN_BITS):
        gain = 1.25 if (identity.pattern >> bit) & 1 else 0.75
        paint(torso_top + bit * band, torso_top + (bit + 1) * band, cx - half_torso, cx + half_torso, base * gain)

    # Legs: lower clothing down to the knee for shorts/skirts, full length otherwise
    leg_top, leg_bottom = 0.55 * H, 0.96 * H
    cloth_bottom = 0.74 * H if values['lower'] in SHORT_LOWER else leg_bottom
    lower = LOWER_COLORS[values['lower']]
    if values['lower'] == 'gray-skirt':
        paint(leg_top, cloth_bottom, cx - half_torso, cx + half_torso, lower)
    for c0, c1 in ((cx - half_torso, cx - 0.04 * W), (cx + 0.04 * W, cx + half_torso)):
        if values['lower'] != 'gray-skirt':
            paint(leg_top, cloth_bottom, c0, c1, lower)
        paint(cloth_bottom, leg_bottom, c0 + 0.04 * W, c1 - 0.04 * W, skin)

    # Accessory shapes
    accessory = values['accessory']
    if accessory == 'watch':
        paint(0.50 * H, 0.54 * H, cx + half_torso, cx + half_torso + 0.08 * W, ACCESSORY_COLOR)
    elif accessory == 'backpack':
        paint(0.22 * H, 0.48 * H, cx - half_torso - 0.12 * W, cx - half_torso, ACCESSORY_COLOR)
    elif accessory == 'handbag':
        paint(0.46 * H, 0.60 * H, cx + half_torso, cx + half_torso + 0.14 * W, ACCESSORY_COLOR)
    elif accessory == 'hat':
        paint(0.00 * H, 0.04 * H, cx - head_half - 0.05 * W, cx + head_half + 0.05 * W, ACCESSORY_COLOR)
    elif accessory == 'scarf':
        paint(0.19 * H, 0.25 * H, cx - half_torso * 0.7, cx + half_torso * 0.7, ACCESSORY_COLOR)

    return canvas


def apply_modality(canvas, modality, style):
    """
    Apply the modality transform and style perturbation to a clean canvas.

    Infrared images collapse to luminance and share one noise field across the
    three channels, so their channel variance is zero.
    """
    noise_rng = np.random.default_rng(style.noise_seed)
    _, height, width = canvas.shape
    if modality == INFRARED:
        gray = np.tensordot(LUMA, canvas, axes=1)[None]
        noise = noise_rng.normal(0.0, NOISE_SIGMA, size=(1, height, width))
        image = style.contrast * (gray - 0.5) + 0.5 + style.illumination + noise
        image = np.repeat(np.clip(image, 0.0, 1.0), 3, axis=0)
    else:
        noise = noise_rng.normal(0.0, NOISE_SIGMA, size=canvas.shape)
        image = np.clip(style.contrast * (canvas - 0.5) + 0.5 + style.illumination + noise, 0.0, 1.0)
    return image.astype(np.float32)


def _camera_for(modality, label, index):
    cameras = VISIBLE_CAMERAS if modality == VISIBLE else INFRARED_CAMERAS
    return cameras[(label + index) % len(cameras)]


def generate_synthetic_dataset(spec=None):
    """
    Generate a synthetic visible/infrared person dataset.

    Args:
        spec (DatasetSpec): Dataset dimensions and seed

    Returns:
        Dataset: Identities and rendered records, deterministic under spec.seed
    """
    spec = spec or DatasetSpec()
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    identities = _draw_identities(spec, rng)

    records = []
    for identity in identities:
        canvas = render_identity(identity, spec.height, spec.width)
        for modality in MODALITIES:
            ranges = STYLE_RANGES[modality]
            for index in range(spec.images_per_modality):
                style = StyleFactors(
                    illumination=float(rng.uniform(*ranges['illumination'])),
                    contrast=float(rng.uniform(*ranges['contrast'])),
                    noise_seed=int(rng.integers(2 ** 31 - 1)),
                )
                records.append(ImageRecord(
                    pixels=apply_modality(canvas, modality, style),
                    modality=modality,
                    identity=identity,
                    camera=_camera_for(modality, identity.label, index),
                    style=style,
                    index=index,
                ))

    logger.info(f"Generated synthetic dataset: {spec.num_train_ids} train + {spec.num_test_ids} test identities, "
                f"{len(records)} images of {spec.height}x{spec.width} (seed={spec.seed})")
    return Dataset(spec=spec, identities=identities, records=records)


def infrared_chroma(pixels):
    """Maximum per-pixel variance across the three channels."""
    return float(np.var(pixels, axis=0).max())


def check_dataset(dataset, chroma_bound=IR_CHROMA_BOUND):
    """Verify camera layout, infrared chroma bound and style draws; returns the list of violations."""
    violations = []
    styles = {}
    for record in dataset.records:
        allowed = VISIBLE_CAMERAS if record.modality == VISIBLE else INFRARED_CAMERAS
        if record.camera not in allowed:
            violations.append(f"{record.key}: camera {record.camera} not in {allowed}")
        if record.modality == INFRARED and infrared_chroma(record.pixels) > chroma_bound:
            violations.append(f"{record.key}: infrared chroma above {chroma_bound}")
        for factor, (low, high) in STYLE_RANGES[record.modality].items():
            value = getattr(record.style, factor)
            if not low <= value <= high:
                violations.append(f"{record.key}: {factor} {value:.4f} outside [{low}, {high}]")
        pair = (record.style.illumination, record.style.contrast)
        seen = styles.setdefault((record.split, record.identity.label), {})
        if pair in seen:
            violations.append(f"{record.key}: style factors repeat those of {seen[pair]}")
        seen.setdefault(pair, record.key)
    return violations


def _write_tensor(path, array):
    array = np.asarray(array, dtype='<f4')
    with open(path, 'wb') as handle:
        handle.write(np.asarray(array.shape, dtype='<u4').tobytes())
        handle.write(array.tobytes())


def read_tensor(path):
    """Read a `.bin` tensor written by save_dataset: 3 uint32 shape words then float32 data."""
    with open(path, 'rb') as handle:
        shape = tuple(int(v) for v in np.frombuffer(handle.read(12), dtype='<u4'))
        data = np.frombuffer(handle.read(), dtype='<f4')
    return data.reshape(shape).astype(np.float32)


def save_dataset(dataset, directory):
    """
    Persist a dataset as `meta.json` plus one `.bin` tensor per image.

    Args:
        dataset (Dataset): Dataset to write
        directory (str): Output directory, created if needed
    """
    os.makedirs(directory, exist_ok=True)
    meta = {
        'spec': asdict(dataset.spec),
        'attribute_vocab': {name: list(values) for name, values in ATTRIBUTE_VOCAB.items()},
        'identities': [
            {'label': i.label, 'split': i.split, 'pattern': i.pattern, 'attributes': i.attribute_values()}
            for i in dataset.identities
        ],
        'images': [],
    }
    for record in dataset.records:
        _write_tensor(os.path.join(directory, f"{record.key}.bin"), record.pixels)
        meta['images'].append({
            'key': record.key,
            'split': record.split,
            'identity': record.identity.label,
            'modality': record.modality,
            'camera': record.camera,
            'index': record.index,
            'style': asdict(record.style),
        })
    with open(os.path.join(directory, 'meta.json'), 'w') as handle:
        json.dump(meta, handle, indent=1)
    logger.info(f"Saved {len(dataset.records)} images to {directory}")


def load_dataset(directory):
    """Load a dataset written by save_dataset."""
    meta_path = os.path.join(directory, 'meta.json')
    if not os.path.exists(meta_path):
        raise MissingArtifactError(f"No dataset found at {directory} (missing meta.json); run the generate stage first")
    with open(meta_path) as handle:
        meta = json.load(handle)

    spec = DatasetSpec(**meta['spec'])
    identities = {}
    for entry in meta['identities']:
        identity = Identity.from_values(entry['label'], entry['attributes'], entry['split'], entry['pattern'])
        identities[(identity.split, identity.label)] = identity

    records = []
    for entry in meta['images']:
        path = os.path.join(directory, f"{entry['key']}.bin")
        if not os.path.exists(path):
            raise MissingArtifactError(f"Missing image tensor {path}")
        records.append(ImageRecord(
            pixels=read_tensor(path),
            modality=entry['modality'],
            identity=identities[(entry['split'], entry['identity'])],
            camera=entry['camera'],
            style=StyleFactors(**entry['style']),
            index=entry['index'],
        ))
    logger.info(f"Loaded {len(records)} images from {directory}")
    return Dataset(spec=spec, identities=list(identities.values()), records=records)
