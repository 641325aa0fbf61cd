//! Panoramic latent buffer, ring-aware tile extraction/insertion and
//! overlap accumulation.
//!
//! Every buffer in the crate uses one element order: frame-major, then
//! channel, row, column. A [`PanoLatent`] may be a ring along its column
//! axis (`h_ring`, the left and right edges are identified) and along its
//! frame axis (`t_ring`, the first and last frames are identified). Rows
//! never wrap.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

/// Four-dimensional extent in canonical element order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Shape {
    pub frames: usize,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl Shape {
    pub const fn new(frames: usize, channels: usize, height: usize, width: usize) -> Self {
        Self {
            frames,
            channels,
            height,
            width,
        }
    }

    pub const fn len(&self) -> usize {
        self.frames * self.channels * self.height * self.width
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Elements in one (frame, channel) plane.
    pub const fn plane(&self) -> usize {
        self.height * self.width
    }

    #[inline]
    pub const fn index(&self, frame: usize, channel: usize, row: usize, col: usize) -> usize {
        ((frame * self.channels + channel) * self.height + row) * self.width + col
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}x{}x{}x{}",
            self.frames, self.channels, self.height, self.width
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Axis {
    Frame,
    Channel,
    Row,
    Column,
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Axis::Frame => "frame",
            Axis::Channel => "channel",
            Axis::Row => "row",
            Axis::Column => "column",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LatentError {
    #[error("buffer holds {actual} elements but shape {shape} needs {expected}")]
    Length {
        shape: Shape,
        expected: usize,
        actual: usize,
    },
    #[error("{axis} range starting at {start} with length {len} is outside 0..{extent}")]
    OutOfBounds {
        axis: Axis,
        start: isize,
        len: usize,
        extent: usize,
    },
    #[error("region has zero length along the {axis} axis")]
    EmptyRegion { axis: Axis },
    #[error("region length {len} exceeds the {axis} ring of extent {extent}")]
    RingOverflow {
        axis: Axis,
        len: usize,
        extent: usize,
    },
    #[error("tile shape {actual} does not match region shape {expected}")]
    TileShape { expected: Shape, actual: Shape },
    #[error("write region is not contained in the tile's source region along the {axis} axis")]
    NotContained { axis: Axis },
    #[error("accumulator shape {expected} does not match latent shape {actual}")]
    AccumulatorShape { expected: Shape, actual: Shape },
    #[error("coverage hole: frame {frame}, row {row}, column {col} received no writes")]
    Coverage { frame: usize, row: usize, col: usize },
}

/// Dense panoramic latent with ring topology flags.
#[derive(Clone, Debug, PartialEq)]
pub struct PanoLatent<S> {
    shape: Shape,
    h_ring: bool,
    t_ring: bool,
    data: Vec<S>,
}

impl<S: Scalar> PanoLatent<S> {
    pub fn zeros(shape: Shape, h_ring: bool, t_ring: bool) -> Self {
        Self {
            shape,
            h_ring,
            t_ring,
            data: vec![S::zero(); shape.len()],
        }
    }

    pub fn from_vec(
        shape: Shape,
        h_ring: bool,
        t_ring: bool,
        data: Vec<S>,
    ) -> Result<Self, LatentError> {
        if data.len() != shape.len() {
            return Err(LatentError::Length {
                shape,
                expected: shape.len(),
                actual: data.len(),
            });
        }
        Ok(Self {
            shape,
            h_ring,
            t_ring,
            data,
        })
    }

    /// Builds a latent by evaluating `f(frame, channel, row, col)` at every element.
    pub fn from_fn(
        shape: Shape,
        h_ring: bool,
        t_ring: bool,
        mut f: impl FnMut(usize, usize, usize, usize) -> S,
    ) -> Self {
        let mut data = Vec::with_capacity(shape.len());
        for fr in 0..shape.frames {
            for c in 0..shape.channels {
                for r in 0..shape.height {
                    for x in 0..shape.width {
                        data.push(f(fr, c, r, x));
                    }
                }
            }
        }
        Self {
            shape,
            h_ring,
            t_ring,
            data,
        }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn h_ring(&self) -> bool {
        self.h_ring
    }

    pub fn t_ring(&self) -> bool {
        self.t_ring
    }

    pub fn set_topology(&mut self, h_ring: bool, t_ring: bool) {
        self.h_ring = h_ring;
        self.t_ring = t_ring;
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [S] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<S> {
        self.data
    }

    /// Reads one element, resolving ring axes modulo their extent.
    pub fn get(&self, frame: isize, channel: usize, row: usize, col: isize) -> Result<S, LatentError> {
        let f = resolve(frame, self.shape.frames, self.t_ring, Axis::Frame)?;
        let x = resolve(col, self.shape.width, self.h_ring, Axis::Column)?;
        if channel >= self.shape.channels {
            return Err(LatentError::OutOfBounds {
                axis: Axis::Channel,
                start: channel as isize,
                len: 1,
                extent: self.shape.channels,
            });
        }
        if row >= self.shape.height {
            return Err(LatentError::OutOfBounds {
                axis: Axis::Row,
                start: row as isize,
                len: 1,
                extent: self.shape.height,
            });
        }
        Ok(self.data[self.shape.index(f, channel, row, x)])
    }

    #[inline]
    pub fn at(&self, frame: usize, channel: usize, row: usize, col: usize) -> S {
        self.data[self.shape.index(frame, channel, row, col)]
    }

    #[inline]
    pub fn set(&mut self, frame: usize, channel: usize, row: usize, col: usize, v: S) {
        let i = self.shape.index(frame, channel, row, col);
        self.data[i] = v;
    }

    /// Checks a region against this latent's extent and topology.
    pub fn check_region(&self, region: &TileRegion) -> Result<(), LatentError> {
        check_axis(
            region.frame_start,
            region.frame_len,
            self.shape.frames,
            self.t_ring,
            Axis::Frame,
        )?;
        check_axis(
            region.row_start as isize,
            region.row_len,
            self.shape.height,
            false,
            Axis::Row,
        )?;
        check_axis(
            region.col_start,
            region.col_len,
            self.shape.width,
            self.h_ring,
            Axis::Column,
        )
    }

    /// Copies `region` out of the latent (the Split operator).
    pub fn extract_tile(&self, region: &TileRegion) -> Result<Tile<S>, LatentError> {
        self.check_region(region)?;
        let shape = region.tile_shape(self.shape.channels);
        let frames = axis_map(region.frame_start, region.frame_len, self.shape.frames);
        let cols = axis_map(region.col_start, region.col_len, self.shape.width);
        let mut data = Vec::with_capacity(shape.len());
        for &f in &frames {
            for c in 0..self.shape.channels {
                for r in region.row_start..region.row_start + region.row_len {
                    let base = self.shape.index(f, c, r, 0);
                    let row = &self.data[base..base + self.shape.width];
                    data.extend(cols.iter().map(|&x| row[x]));
                }
            }
        }
        Ok(Tile { shape, data })
    }

    /// Writes `tile` back over `region` (the Con operator); the exact inverse of
    /// [`extract_tile`](Self::extract_tile) on that region.
    pub fn insert_tile(&mut self, region: &TileRegion, tile: &Tile<S>) -> Result<(), LatentError> {
        self.check_region(region)?;
        let expected = region.tile_shape(self.shape.channels);
        if tile.shape != expected {
            return Err(LatentError::TileShape {
                expected,
                actual: tile.shape,
            });
        }
        let frames = axis_map(region.frame_start, region.frame_len, self.shape.frames);
        let cols = axis_map(region.col_start, region.col_len, self.shape.width);
        let mut src = tile.data.chunks_exact(region.col_len);
        for &f in &frames {
            for c in 0..self.shape.channels {
                for r in region.row_start..region.row_start + region.row_len {
                    let base = self.shape.index(f, c, r, 0);
                    let row = &mut self.data[base..base + self.shape.width];
                    let line = src.next().expect("tile length checked against region");
                    for (&x, &v) in cols.iter().zip(line) {
                        row[x] = v;
                    }
                }
            }
        }
        Ok(())
    }

    /// Writes the part of `tile` (extracted from `source`) that falls inside
    /// `write`, which must lie within `source` in the same unwrapped coordinates.
    pub fn insert_subtile(
        &mut self,
        source: &TileRegion,
        tile: &Tile<S>,
        write: &TileRegion,
    ) -> Result<(), LatentError> {
        if source == write {
            return self.insert_tile(write, tile);
        }
        let sub = tile.subtile(source, write)?;
        self.insert_tile(write, &sub)
    }
}

/// A 4-D block addressed in latent coordinates. `frame_start` and `col_start`
/// may lie outside `0..extent` when the corresponding axis is a ring.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TileRegion {
    pub frame_start: isize,
    pub frame_len: usize,
    pub row_start: usize,
    pub row_len: usize,
    pub col_start: isize,
    pub col_len: usize,
}

impl TileRegion {
    pub fn new(
        frames: (isize, usize),
        rows: (usize, usize),
        cols: (isize, usize),
    ) -> Self {
        Self {
            frame_start: frames.0,
            frame_len: frames.1,
            row_start: rows.0,
            row_len: rows.1,
            col_start: cols.0,
            col_len: cols.1,
        }
    }

    /// The whole extent of `shape`.
    pub fn full(shape: Shape) -> Self {
        Self::new(
            (0, shape.frames),
            (0, shape.height),
            (0, shape.width),
        )
    }

    pub fn tile_shape(&self, channels: usize) -> Shape {
        Shape::new(self.frame_len, channels, self.row_len, self.col_len)
    }

    /// Spatial + temporal element count (channels excluded).
    pub fn area(&self) -> usize {
        self.frame_len * self.row_len * self.col_len
    }

    /// Whether `inner` lies within `self` in unwrapped coordinates.
    pub fn contains(&self, inner: &TileRegion) -> Result<(), LatentError> {
        let within = |outer_start: isize, outer_len: usize, s: isize, l: usize| {
            s >= outer_start && s + l as isize <= outer_start + outer_len as isize
        };
        if !within(self.frame_start, self.frame_len, inner.frame_start, inner.frame_len) {
            return Err(LatentError::NotContained { axis: Axis::Frame });
        }
        if !within(
            self.row_start as isize,
            self.row_len,
            inner.row_start as isize,
            inner.row_len,
        ) {
            return Err(LatentError::NotContained { axis: Axis::Row });
        }
        if !within(self.col_start, self.col_len, inner.col_start, inner.col_len) {
            return Err(LatentError::NotContained { axis: Axis::Column });
        }
        Ok(())
    }
}

/// Dense buffer holding one window's worth of elements.
#[derive(Clone, Debug, PartialEq)]
pub struct Tile<S> {
    shape: Shape,
    data: Vec<S>,
}

impl<S: Scalar> Tile<S> {
    pub fn new(shape: Shape, data: Vec<S>) -> Result<Self, LatentError> {
        if data.len() != shape.len() {
            return Err(LatentError::Length {
                shape,
                expected: shape.len(),
                actual: data.len(),
            });
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Shape) -> Self {
        Self {
            shape,
            data: vec![S::zero(); shape.len()],
        }
    }

    pub fn filled(shape: Shape, v: S) -> Self {
        Self {
            shape,
            data: vec![v; shape.len()],
        }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [S] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<S> {
        self.data
    }

    #[inline]
    pub fn at(&self, frame: usize, channel: usize, row: usize, col: usize) -> S {
        self.data[self.shape.index(frame, channel, row, col)]
    }

    /// Index of the first non-finite element, if any.
    pub fn first_non_finite(&self) -> Option<usize> {
        self.data.iter().position(|v| !v.is_finite())
    }

    /// Cuts the `inner` block out of a tile that was extracted from `outer`.
    pub fn subtile(&self, outer: &TileRegion, inner: &TileRegion) -> Result<Tile<S>, LatentError> {
        outer.contains(inner)?;
        let channels = self.shape.channels;
        let expected = outer.tile_shape(channels);
        if self.shape != expected {
            return Err(LatentError::TileShape {
                expected,
                actual: self.shape,
            });
        }
        let df = (inner.frame_start - outer.frame_start) as usize;
        let dr = inner.row_start - outer.row_start;
        let dc = (inner.col_start - outer.col_start) as usize;
        let shape = inner.tile_shape(channels);
        let mut data = Vec::with_capacity(shape.len());
        for f in 0..inner.frame_len {
            for c in 0..channels {
                for r in 0..inner.row_len {
                    let base = self.shape.index(f + df, c, r + dr, dc);
                    data.extend_from_slice(&self.data[base..base + inner.col_len]);
                }
            }
        }
        Ok(Tile { shape, data })
    }
}

/// Value and weight accumulators for blended (overlapping) writes.
#[derive(Clone, Debug)]
pub struct BlendAccumulator<S> {
    value: PanoLatent<S>,
    /// One weight per (frame, row, column), shared by all channels.
    weight: Vec<S>,
}

impl<S: Scalar> BlendAccumulator<S> {
    pub fn new(shape: Shape, h_ring: bool, t_ring: bool) -> Self {
        Self {
            value: PanoLatent::zeros(shape, h_ring, t_ring),
            weight: vec![S::zero(); shape.frames * shape.plane()],
        }
    }

    pub fn for_latent(latent: &PanoLatent<S>) -> Self {
        Self::new(latent.shape(), latent.h_ring(), latent.t_ring())
    }

    pub fn shape(&self) -> Shape {
        self.value.shape()
    }

    pub fn reset(&mut self) {
        self.value.data_mut().fill(S::zero());
        self.weight.fill(S::zero());
    }

    pub fn weight_at(&self, frame: usize, row: usize, col: usize) -> S {
        let s = self.value.shape();
        self.weight[(frame * s.height + row) * s.width + col]
    }

    /// Adds `tile` over `region` with unit weight.
    pub fn add(&mut self, region: &TileRegion, tile: &Tile<S>) -> Result<(), LatentError> {
        self.value.check_region(region)?;
        let shape = self.value.shape();
        let expected = region.tile_shape(shape.channels);
        if tile.shape() != expected {
            return Err(LatentError::TileShape {
                expected,
                actual: tile.shape(),
            });
        }
        let frames = axis_map(region.frame_start, region.frame_len, shape.frames);
        let cols = axis_map(region.col_start, region.col_len, shape.width);
        let mut src = tile.data().chunks_exact(region.col_len);
        for &f in &frames {
            for c in 0..shape.channels {
                for r in region.row_start..region.row_start + region.row_len {
                    let base = shape.index(f, c, r, 0);
                    let line = src.next().expect("tile length checked against region");
                    let row = &mut self.value.data_mut()[base..base + shape.width];
                    for (&x, &v) in cols.iter().zip(line) {
                        row[x] += v;
                    }
                }
            }
            for r in region.row_start..region.row_start + region.row_len {
                let base = (f * shape.height + r) * shape.width;
                for &x in &cols {
                    self.weight[base + x] += S::one();
                }
            }
        }
        Ok(())
    }

    /// Adds a single value (used by gather-style reprojection).
    #[inline]
    pub(crate) fn add_value(&mut self, frame: usize, channel: usize, row: usize, col: usize, v: S) {
        let i = self.value.shape().index(frame, channel, row, col);
        self.value.data_mut()[i] += v;
    }

    #[inline]
    pub(crate) fn add_weight(&mut self, frame: usize, row: usize, col: usize) {
        let s = self.value.shape();
        self.weight[(frame * s.height + row) * s.width + col] += S::one();
    }

    /// Divides value by weight and writes the mean into `out` wherever the
    /// weight is positive. Every element of `coverage` must have been written.
    pub fn finalize_into(
        &self,
        out: &mut PanoLatent<S>,
        coverage: &[TileRegion],
    ) -> Result<(), LatentError> {
        let shape = self.value.shape();
        if out.shape() != shape {
            return Err(LatentError::AccumulatorShape {
                expected: shape,
                actual: out.shape(),
            });
        }
        for region in coverage {
            self.value.check_region(region)?;
            let frames = axis_map(region.frame_start, region.frame_len, shape.frames);
            let cols = axis_map(region.col_start, region.col_len, shape.width);
            for &f in &frames {
                for r in region.row_start..region.row_start + region.row_len {
                    for &x in &cols {
                        if self.weight_at(f, r, x) <= S::zero() {
                            return Err(LatentError::Coverage {
                                frame: f,
                                row: r,
                                col: x,
                            });
                        }
                    }
                }
            }
        }
        let plane = shape.plane();
        for f in 0..shape.frames {
            let w = &self.weight[f * plane..(f + 1) * plane];
            for c in 0..shape.channels {
                let base = shape.index(f, c, 0, 0);
                let src = &self.value.data()[base..base + plane];
                let dst = &mut out.data_mut()[base..base + plane];
                for ((d, &v), &wt) in dst.iter_mut().zip(src).zip(w) {
                    if wt > S::zero() {
                        *d = v / wt;
                    }
                }
            }
        }
        Ok(())
    }

    /// [`finalize_into`](Self::finalize_into) with the whole latent as coverage.
    pub fn finalize_full(&self, out: &mut PanoLatent<S>) -> Result<(), LatentError> {
        let full = TileRegion::full(self.value.shape());
        self.finalize_into(out, &[full])
    }
}

fn resolve(i: isize, extent: usize, ring: bool, axis: Axis) -> Result<usize, LatentError> {
    if ring {
        Ok(i.rem_euclid(extent as isize) as usize)
    } else if i >= 0 && (i as usize) < extent {
        Ok(i as usize)
    } else {
        Err(LatentError::OutOfBounds {
            axis,
            start: i,
            len: 1,
            extent,
        })
    }
}

fn check_axis(start: isize, len: usize, extent: usize, ring: bool, axis: Axis) -> Result<(), LatentError> {
    if len == 0 {
        return Err(LatentError::EmptyRegion { axis });
    }
    if ring {
        if len > extent {
            return Err(LatentError::RingOverflow { axis, len, extent });
        }
        return Ok(());
    }
    if start < 0 || start as usize + len > extent {
        return Err(LatentError::OutOfBounds {
            axis,
            start,
            len,
            extent,
        });
    }
    Ok(())
}

/// Source index for each position along a (possibly wrapping) axis range.
pub(crate) fn axis_map(start: isize, len: usize, extent: usize) -> Vec<usize> {
    (0..len as isize)
        .map(|k| (start + k).rem_euclid(extent as isize) as usize)
        .collect()
}
