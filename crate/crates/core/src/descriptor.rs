//! The 257-dimensional face descriptor and its six named segments.
//!
//! A descriptor is the concatenation of 3DMM coefficient groups in a fixed
//! order:
//!
//! | segment        | CLI name | dims | offset |
//! |----------------|----------|------|--------|
//! | shape          | `alpha`  | 80   | 0      |
//! | texture        | `beta`   | 80   | 80     |
//! | expression     | `delta`  | 64   | 160    |
//! | rotation       | `theta`  | 3    | 224    |
//! | translation    | `l`      | 3    | 227    |
//! | illumination   | `gamma`  | 27   | 230    |

use std::fmt;
use std::ops::Range;

use crate::error::{Error, Result};

/// Total width of a descriptor.
pub const DESCRIPTOR_DIM: usize = 257;

/// One named group of descriptor coefficients.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Segment {
    Shape,
    Texture,
    Expression,
    Rotation,
    Translation,
    Illumination,
}

impl Segment {
    /// Canonical serialization order.
    pub const ALL: [Segment; 6] = [
        Segment::Shape,
        Segment::Texture,
        Segment::Expression,
        Segment::Rotation,
        Segment::Translation,
        Segment::Illumination,
    ];

    pub const fn dim(self) -> usize {
        match self {
            Segment::Shape | Segment::Texture => 80,
            Segment::Expression => 64,
            Segment::Rotation | Segment::Translation => 3,
            Segment::Illumination => 27,
        }
    }

    pub const fn offset(self) -> usize {
        match self {
            Segment::Shape => 0,
            Segment::Texture => 80,
            Segment::Expression => 160,
            Segment::Rotation => 224,
            Segment::Translation => 227,
            Segment::Illumination => 230,
        }
    }

    pub const fn range(self) -> Range<usize> {
        self.offset()..self.offset() + self.dim()
    }

    /// Position in [`Segment::ALL`], also the bit index in a [`SegmentMask`].
    pub const fn index(self) -> usize {
        self as usize
    }

    /// Name used on the command line and in mask specs.
    pub const fn name(self) -> &'static str {
        match self {
            Segment::Shape => "alpha",
            Segment::Texture => "beta",
            Segment::Expression => "delta",
            Segment::Rotation => "theta",
            Segment::Translation => "l",
            Segment::Illumination => "gamma",
        }
    }

    pub fn from_name(name: &str) -> Option<Segment> {
        Segment::ALL.into_iter().find(|s| s.name() == name)
    }
}

impl fmt::Display for Segment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Set of active segments, bit `i` standing for `Segment::ALL[i]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SegmentMask(u8);

impl SegmentMask {
    pub const FULL: SegmentMask = SegmentMask(0b11_1111);
    /// Expression, rotation and translation: the expression head's input.
    pub const EXPRESSION: SegmentMask = SegmentMask(0b01_1100);
    /// Shape and texture: the verification head's input.
    pub const IDENTITY: SegmentMask = SegmentMask(0b00_0011);

    /// Validates a raw mask byte: at least one flag, bits 6-7 clear.
    pub fn from_bits(bits: u8) -> Result<SegmentMask> {
        if bits & 0b1100_0000 != 0 {
            return Err(Error::Format(format!(
                "segment mask {bits:#010b} has reserved bits set"
            )));
        }
        if bits == 0 {
            return Err(Error::Config("segment mask selects no segments".into()));
        }
        Ok(SegmentMask(bits))
    }

    pub fn from_segments(segments: &[Segment]) -> Result<SegmentMask> {
        let bits = segments.iter().fold(0u8, |acc, s| acc | (1 << s.index()));
        SegmentMask::from_bits(bits)
    }

    /// Parses a comma-separated list of segment names, e.g. `delta,theta,l`.
    pub fn parse(spec: &str) -> Result<SegmentMask> {
        let mut segments = Vec::new();
        for name in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            match name {
                "full" | "all" => return Ok(SegmentMask::FULL),
                _ => segments.push(Segment::from_name(name).ok_or_else(|| {
                    Error::Config(format!(
                        "unknown segment `{name}` (expected alpha, beta, delta, theta, l, gamma)"
                    ))
                })?),
            }
        }
        SegmentMask::from_segments(&segments)
    }

    pub const fn bits(self) -> u8 {
        self.0
    }

    pub const fn contains(self, segment: Segment) -> bool {
        self.0 & (1 << segment.index()) != 0
    }

    pub fn segments(self) -> impl Iterator<Item = Segment> {
        Segment::ALL.into_iter().filter(move |s| self.contains(*s))
    }

    /// Sum of the dimensions of all active segments.
    pub fn active_dim(self) -> usize {
        self.segments().map(Segment::dim).sum()
    }

    pub fn is_full(self) -> bool {
        self == SegmentMask::FULL
    }
}

impl fmt::Display for SegmentMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<_> = self.segments().map(Segment::name).collect();
        f.write_str(&names.join(","))
    }
}

/// How [`apply_portion`] treats inactive segments.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PortionMode {
    /// Keep the full width, overwrite inactive segments with 0.0.
    ZeroPad,
    /// Drop inactive segments, keeping active ones in canonical order.
    Project,
}

/// Result of [`apply_portion`].
#[derive(Clone, Debug, PartialEq)]
pub enum Portion {
    Padded(Descriptor),
    Projected(Vec<f64>),
}

/// A validated 257-D descriptor: exact length, all values finite.
#[derive(Clone, Debug, PartialEq)]
pub struct Descriptor {
    values: Vec<f64>,
}

/// Borrowed view of the six segments of a descriptor.
#[derive(Clone, Copy, Debug)]
pub struct SegmentParts<'a> {
    pub shape: &'a [f64],
    pub texture: &'a [f64],
    pub expression: &'a [f64],
    pub rotation: &'a [f64],
    pub translation: &'a [f64],
    pub illumination: &'a [f64],
}

impl<'a> SegmentParts<'a> {
    pub fn get(&self, segment: Segment) -> &'a [f64] {
        match segment {
            Segment::Shape => self.shape,
            Segment::Texture => self.texture,
            Segment::Expression => self.expression,
            Segment::Rotation => self.rotation,
            Segment::Translation => self.translation,
            Segment::Illumination => self.illumination,
        }
    }
}

impl Descriptor {
    pub fn new(values: Vec<f64>) -> Result<Descriptor> {
        if values.len() != DESCRIPTOR_DIM {
            return Err(Error::Dimension {
                expected: DESCRIPTOR_DIM,
                found: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("descriptor element {i}")));
        }
        Ok(Descriptor { values })
    }

    pub fn zeros() -> Descriptor {
        Descriptor {
            values: vec![0.0; DESCRIPTOR_DIM],
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn segment(&self, segment: Segment) -> &[f64] {
        &self.values[segment.range()]
    }

    pub fn split(&self) -> SegmentParts<'_> {
        SegmentParts {
            shape: self.segment(Segment::Shape),
            texture: self.segment(Segment::Texture),
            expression: self.segment(Segment::Expression),
            rotation: self.segment(Segment::Rotation),
            translation: self.segment(Segment::Translation),
            illumination: self.segment(Segment::Illumination),
        }
    }

    /// Concatenates six segments in canonical order. A segment of the wrong
    /// length is reported by name.
    pub fn assemble(parts: SegmentParts<'_>) -> Result<Descriptor> {
        let mut values = Vec::with_capacity(DESCRIPTOR_DIM);
        for segment in Segment::ALL {
            let part = parts.get(segment);
            if part.len() != segment.dim() {
                return Err(Error::SegmentLength {
                    segment,
                    expected: segment.dim(),
                    actual: part.len(),
                });
            }
            values.extend_from_slice(part);
        }
        Descriptor::new(values)
    }

    /// Copies of the active segments, concatenated in canonical order.
    pub fn project(&self, mask: SegmentMask) -> Vec<f64> {
        let mut out = Vec::with_capacity(mask.active_dim());
        for segment in mask.segments() {
            out.extend_from_slice(self.segment(segment));
        }
        out
    }

    /// Same width, with every inactive segment set to 0.0.
    pub fn zero_pad(&self, mask: SegmentMask) -> Descriptor {
        let mut values = self.values.clone();
        for segment in Segment::ALL.into_iter().filter(|s| !mask.contains(*s)) {
            values[segment.range()].fill(0.0);
        }
        Descriptor { values }
    }

    /// Inverse of [`Descriptor::project`]: scatters a dense active-segment
    /// vector back into a full descriptor, zero elsewhere.
    pub fn from_projection(mask: SegmentMask, active: &[f64]) -> Result<Descriptor> {
        if active.len() != mask.active_dim() {
            return Err(Error::Dimension {
                expected: mask.active_dim(),
                found: active.len(),
            });
        }
        let mut values = vec![0.0; DESCRIPTOR_DIM];
        let mut cursor = 0;
        for segment in mask.segments() {
            values[segment.range()].copy_from_slice(&active[cursor..cursor + segment.dim()]);
            cursor += segment.dim();
        }
        Descriptor::new(values)
    }
}

pub fn apply_portion(descriptor: &Descriptor, mask: SegmentMask, mode: PortionMode) -> Portion {
    match mode {
        PortionMode::ZeroPad => Portion::Padded(descriptor.zero_pad(mask)),
        PortionMode::Project => Portion::Projected(descriptor.project(mask)),
    }
}
