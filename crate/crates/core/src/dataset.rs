//! Small labeled image datasets and a synthetic template generator.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};

use crate::SeedRng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Validation,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum DatasetError {
    LabelOutOfRange {
        index: usize,
        label: u8,
        num_classes: u8,
    },
    PixelCount {
        expected: usize,
        found: usize,
    },
    LabelCount {
        expected: usize,
        found: usize,
    },
}

impl fmt::Display for DatasetError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DatasetError::LabelOutOfRange {
                index,
                label,
                num_classes,
            } => write!(
                f,
                "sample {index} has label {label} but there are {num_classes} classes"
            ),
            DatasetError::PixelCount { expected, found } => {
                write!(f, "expected {expected} pixel bytes, found {found}")
            }
            DatasetError::LabelCount { expected, found } => {
                write!(f, "expected {expected} labels, found {found}")
            }
        }
    }
}

impl core::error::Error for DatasetError {}

/// Shape of one sample, stored height × width × channels.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ImageShape {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl ImageShape {
    pub const fn new(height: usize, width: usize, channels: usize) -> Self {
        ImageShape {
            height,
            width,
            channels,
        }
    }

    pub const fn len(&self) -> usize {
        self.height * self.width * self.channels
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Immutable set of `u8` images with class labels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Dataset {
    shape: ImageShape,
    num_classes: u8,
    pixels: Vec<u8>,
    labels: Vec<u8>,
    split: Split,
}

impl Dataset {
    pub fn new(
        shape: ImageShape,
        num_classes: u8,
        pixels: Vec<u8>,
        labels: Vec<u8>,
        split: Split,
    ) -> Result<Dataset, DatasetError> {
        let n = labels.len();
        if pixels.len() != n * shape.len() {
            return Err(DatasetError::PixelCount {
                expected: n * shape.len(),
                found: pixels.len(),
            });
        }
        if let Some((index, &label)) = labels.iter().enumerate().find(|(_, &l)| l >= num_classes) {
            return Err(DatasetError::LabelOutOfRange {
                index,
                label,
                num_classes,
            });
        }
        Ok(Dataset {
            shape,
            num_classes,
            pixels,
            labels,
            split,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn shape(&self) -> ImageShape {
        self.shape
    }

    pub fn num_classes(&self) -> u8 {
        self.num_classes
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn with_split(mut self, split: Split) -> Dataset {
        self.split = split;
        self
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn label(&self, i: usize) -> u8 {
        self.labels[i]
    }

    /// Raw HWC bytes of sample `i`.
    pub fn sample(&self, i: usize) -> &[u8] {
        let len = self.shape.len();
        &self.pixels[i * len..(i + 1) * len]
    }

    /// Sample `i` scaled to `[-1, 1]` in channel-major (CHW) order.
    pub fn features_chw(&self, i: usize, out: &mut [f64]) {
        let ImageShape {
            height,
            width,
            channels,
        } = self.shape;
        let raw = self.sample(i);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    out[(c * height + y) * width + x] =
                        scale_pixel(raw[(y * width + x) * channels + c]);
                }
            }
        }
    }

    /// Subset with the given sample indices, in that order.
    pub fn select(&self, indices: &[usize]) -> Dataset {
        let mut pixels = Vec::with_capacity(indices.len() * self.shape.len());
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            pixels.extend_from_slice(self.sample(i));
            labels.push(self.labels[i]);
        }
        Dataset {
            shape: self.shape,
            num_classes: self.num_classes,
            pixels,
            labels,
            split: self.split,
        }
    }

    /// Accuracy of always guessing one class on a balanced set.
    pub fn chance_accuracy(&self) -> f64 {
        1.0 / f64::from(self.num_classes.max(1))
    }
}

#[inline]
pub fn scale_pixel(p: u8) -> f64 {
    f64::from(p) / 127.5 - 1.0
}

/// Parameters of the synthetic template dataset.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SynthSpec {
    pub seed: u64,
    pub samples: usize,
    pub classes: u8,
    pub shape: ImageShape,
    /// Probability of flipping each template pixel.
    pub noise: f64,
}

impl SynthSpec {
    pub fn new(seed: u64, samples: usize, classes: u8, shape: ImageShape) -> Self {
        SynthSpec {
            seed,
            samples,
            classes,
            shape,
            noise: 0.1,
        }
    }
}

/// Per-class binary templates for `seed`; shared by every split.
fn templates(seed: u64, classes: u8, shape: ImageShape) -> Vec<Vec<bool>> {
    let mut rng = SeedRng::seed_from_u64(seed);
    (0..classes)
        .map(|_| (0..shape.len()).map(|_| rng.gen_bool(0.5)).collect())
        .collect()
}

/// Class-template images with bit-flip noise.
///
/// Labels are exactly balanced up to `samples % classes` and shuffled. The
/// templates depend on `seed` alone, so the train and validation splits of
/// one seed share them while their noise and order differ.
pub fn synthesize(spec: &SynthSpec, split: Split) -> Dataset {
    assert!(
        spec.classes >= 2,
        "synthetic data needs at least two classes"
    );
    let templates = templates(spec.seed, spec.classes, spec.shape);
    let stream = match split {
        Split::Train => 1,
        Split::Validation => 2,
    };
    let mut rng = SeedRng::seed_from_u64(spec.seed);
    rng.set_stream(stream);

    let mut labels: Vec<u8> = (0..spec.samples)
        .map(|i| (i % usize::from(spec.classes)) as u8)
        .collect();
    labels.shuffle(&mut rng);

    let mut pixels = vec![0u8; spec.samples * spec.shape.len()];
    for (record, &label) in pixels.chunks_mut(spec.shape.len()).zip(&labels) {
        for (px, &on) in record.iter_mut().zip(&templates[usize::from(label)]) {
            let flip = spec.noise > 0.0 && rng.gen_bool(spec.noise);
            *px = if on ^ flip { 255 } else { 0 };
        }
    }
    Dataset::new(spec.shape, spec.classes, pixels, labels, split).expect("labels below classes")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> SynthSpec {
        SynthSpec::new(7, 1000, 10, ImageShape::new(16, 16, 1))
    }

    #[test]
    fn labels_are_balanced() {
        let d = synthesize(&spec(), Split::Train);
        let mut hist = [0usize; 10];
        for &l in d.labels() {
            hist[usize::from(l)] += 1;
        }
        assert_eq!(hist, [100; 10]);
        assert_eq!(d.len(), 1000);
    }

    #[test]
    fn deterministic_per_seed() {
        assert_eq!(
            synthesize(&spec(), Split::Train),
            synthesize(&spec(), Split::Train)
        );
        assert_ne!(
            synthesize(&spec(), Split::Train).pixels(),
            synthesize(&spec(), Split::Validation).pixels()
        );
    }

    #[test]
    fn noise_rate_is_respected() {
        let s = spec();
        let t = templates(s.seed, s.classes, s.shape);
        let d = synthesize(&s, Split::Train);
        let mut flips = 0usize;
        for i in 0..d.len() {
            let tpl = &t[usize::from(d.label(i))];
            flips += d
                .sample(i)
                .iter()
                .zip(tpl)
                .filter(|(&p, &on)| (p == 255) != on)
                .count();
        }
        let rate = flips as f64 / (d.len() * s.shape.len()) as f64;
        assert!((rate - 0.1).abs() < 0.005, "rate {rate}");
        let clean = synthesize(&SynthSpec { noise: 0.0, ..s }, Split::Train);
        for i in 0..clean.len() {
            let tpl = &t[usize::from(clean.label(i))];
            assert!(clean
                .sample(i)
                .iter()
                .zip(tpl)
                .all(|(&p, &on)| (p == 255) == on));
        }
    }

    #[test]
    fn rejects_bad_labels() {
        let err = Dataset::new(
            ImageShape::new(1, 1, 1),
            2,
            vec![0, 0],
            vec![0, 2],
            Split::Train,
        );
        assert_eq!(
            err,
            Err(DatasetError::LabelOutOfRange {
                index: 1,
                label: 2,
                num_classes: 2
            })
        );
    }

    #[test]
    fn chw_layout_and_scaling() {
        let d = Dataset::new(
            ImageShape::new(1, 2, 2),
            2,
            vec![0, 255, 255, 0],
            vec![1],
            Split::Train,
        )
        .unwrap();
        let mut out = [0.0; 4];
        d.features_chw(0, &mut out);
        assert_eq!(out, [-1.0, 1.0, 1.0, -1.0]);
    }
}
