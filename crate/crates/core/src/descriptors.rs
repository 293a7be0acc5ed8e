//! Descriptor data model and the monomial similarity kernel.
//!
//! A [`DescriptorSet`] holds `n` unit-norm vectors of dimension `d` in
//! row-major order. Every row belongs to an item (an image) and carries a
//! region ordinal within that item; global representations are simply sets
//! with one region per item.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Rows whose norm deviates from 1 by more than this are renormalized.
pub const UNIT_NORM_TOLERANCE: f64 = 1e-5;

const MAGIC: &[u8; 4] = b"MRDS";
const VERSION: u32 = 1;
const FLAG_ITEM_MAP: u32 = 1;

/// Parameters of the monomial kernel `s(x, z) = max(x·z, 0)^exponent`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KernelParams {
    pub exponent: u32,
}

impl Default for KernelParams {
    fn default() -> Self {
        Self { exponent: 3 }
    }
}

impl KernelParams {
    pub fn new(exponent: u32) -> Result<Self> {
        if exponent == 0 {
            return Err(Error::input("kernel exponent must be at least 1"));
        }
        Ok(Self { exponent })
    }

    /// Applies the kernel to a precomputed inner product.
    #[inline]
    pub fn apply(&self, inner: f64) -> f64 {
        if inner <= 0.0 {
            0.0
        } else {
            inner.powi(self.exponent as i32)
        }
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Kernel similarity between two vectors of equal dimension.
pub fn kernel_similarity(x: &[f64], z: &[f64], params: KernelParams) -> Result<f64> {
    if x.len() != z.len() {
        return Err(Error::input(format!(
            "dimension mismatch: {} vs {}",
            x.len(),
            z.len()
        )));
    }
    Ok(params.apply(dot(x, z)))
}

/// Scales `v` to unit Euclidean norm. Returns `false` for a zero vector.
pub fn normalize_in_place(v: &mut [f64]) -> bool {
    let nrm = norm(v);
    if nrm == 0.0 || !nrm.is_finite() {
        return false;
    }
    v.iter_mut().for_each(|x| *x /= nrm);
    true
}

/// Rows of one item, ordered by region ordinal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Item {
    pub id: u32,
    pub rows: Vec<usize>,
}

/// Immutable set of unit-norm descriptors with an item/region map.
#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorSet {
    data: Vec<f64>,
    n: usize,
    d: usize,
    item_of: Vec<u32>,
    region_of: Vec<u32>,
    items: Vec<Item>,
}

impl DescriptorSet {
    /// Builds a set from row-major data. Rows off the unit sphere are
    /// renormalized; a zero row is rejected.
    pub fn new(mut data: Vec<f64>, d: usize, item_of: Vec<u32>, region_of: Vec<u32>) -> Result<Self> {
        if d == 0 {
            return Err(Error::input("descriptor dimension must be positive"));
        }
        if !data.len().is_multiple_of(d) {
            return Err(Error::input(format!(
                "data length {} is not a multiple of dimension {d}",
                data.len()
            )));
        }
        let n = data.len() / d;
        if item_of.len() != n || region_of.len() != n {
            return Err(Error::input(format!(
                "item map length {} / region map length {} do not match row count {n}",
                item_of.len(),
                region_of.len()
            )));
        }
        renormalize_rows(&mut data, d).map_err(Error::Input)?;
        let items = index_items(&item_of, &region_of).map_err(Error::Input)?;
        Ok(Self { data, n, d, item_of, region_of, items })
    }

    /// One item per row, item ids equal to row indices.
    pub fn single_region(data: Vec<f64>, d: usize) -> Result<Self> {
        let n = data.len().checked_div(d).unwrap_or(0);
        let item_of = (0..n as u32).collect();
        Self::new(data, d, item_of, vec![0; n])
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.first().map(Vec::len).unwrap_or(0);
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::input("rows have inconsistent dimensions"));
        }
        Self::single_region(rows.concat(), d)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.d)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn item_of(&self, i: usize) -> u32 {
        self.item_of[i]
    }

    pub fn region_of(&self, i: usize) -> u32 {
        self.region_of[i]
    }

    pub fn item_map(&self) -> &[u32] {
        &self.item_of
    }

    pub fn region_map(&self) -> &[u32] {
        &self.region_of
    }

    /// Items sorted by id.
    pub fn items(&self) -> &[Item] {
        &self.items
    }

    pub fn item(&self, id: u32) -> Option<&Item> {
        self.items
            .binary_search_by_key(&id, |it| it.id)
            .ok()
            .map(|pos| &self.items[pos])
    }

    pub fn max_regions_per_item(&self) -> usize {
        self.items.iter().map(|it| it.rows.len()).max().unwrap_or(0)
    }

    /// Region descriptors of one item as a row-major `m×d` buffer.
    pub fn item_matrix(&self, item: &Item) -> Vec<f64> {
        let mut out = Vec::with_capacity(item.rows.len() * self.d);
        for &r in &item.rows {
            out.extend_from_slice(self.row(r));
        }
        out
    }

    /// Subset of rows, keeping their item and region labels.
    pub fn select_items(&self, ids: &[u32]) -> Result<Self> {
        let mut data = Vec::new();
        let mut item_of = Vec::new();
        let mut region_of = Vec::new();
        for &id in ids {
            let item = self
                .item(id)
                .ok_or_else(|| Error::input(format!("unknown item id {id}")))?;
            for &r in &item.rows {
                data.extend_from_slice(self.row(r));
                item_of.push(id);
                region_of.push(self.region_of[r]);
            }
        }
        Self::new(data, self.d, item_of, region_of)
    }

    /// One descriptor per item: the unit-normalized sum of its regions.
    pub fn global_descriptors(&self) -> Result<Self> {
        let mut data = Vec::with_capacity(self.items.len() * self.d);
        let mut ids = Vec::with_capacity(self.items.len());
        for item in &self.items {
            let mut acc = vec![0.0; self.d];
            for &r in &item.rows {
                acc.iter_mut().zip(self.row(r)).for_each(|(a, x)| *a += x);
            }
            if !normalize_in_place(&mut acc) {
                return Err(Error::input(format!(
                    "regions of item {} sum to the zero vector",
                    item.id
                )));
            }
            data.extend_from_slice(&acc);
            ids.push(item.id);
        }
        let n = ids.len();
        Self::new(data, self.d, ids, vec![0; n])
    }

    /// Reads the binary descriptor format.
    pub fn read_from<R: Read>(reader: R) -> Result<Self> {
        let mut r = reader;
        let mut magic = [0u8; 4];
        read_exact(&mut r, &mut magic, "magic")?;
        if &magic != MAGIC {
            return Err(Error::format("bad magic, expected \"MRDS\""));
        }
        let version = read_u32(&mut r, "version")?;
        if version != VERSION {
            return Err(Error::format(format!("unsupported descriptor format version {version}")));
        }
        let n = read_u64(&mut r, "row count")? as usize;
        let d = read_u32(&mut r, "dimension")? as usize;
        let flags = read_u32(&mut r, "flags")?;
        if d == 0 {
            return Err(Error::format("header declares dimension 0"));
        }

        let mut data = Vec::with_capacity(n.saturating_mul(d).min(1 << 28));
        let mut buf = vec![0u8; d * 4];
        for i in 0..n {
            r.read_exact(&mut buf).map_err(|_| {
                Error::format(format!("header declares {n} rows but data ends at row {i}"))
            })?;
            data.extend(
                buf.chunks_exact(4)
                    .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64),
            );
        }

        let (item_of, region_of) = if flags & FLAG_ITEM_MAP != 0 {
            let items = read_u32_array(&mut r, n, "item map")?;
            let regions = read_u32_array(&mut r, n, "region map")?;
            (items, regions)
        } else {
            ((0..n as u32).collect(), vec![0; n])
        };

        renormalize_rows(&mut data, d).map_err(Error::Format)?;
        let items = index_items(&item_of, &region_of).map_err(Error::Format)?;
        Ok(Self { data, n, d, item_of, region_of, items })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let file = File::open(path)?;
        Self::read_from(BufReader::new(file))
    }

    /// Writes the binary descriptor format. Scalars are stored as f32; the
    /// item map is always written.
    pub fn write_to<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = writer;
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(self.n as u64).to_le_bytes())?;
        w.write_all(&(self.d as u32).to_le_bytes())?;
        w.write_all(&FLAG_ITEM_MAP.to_le_bytes())?;
        for &x in &self.data {
            w.write_all(&(x as f32).to_le_bytes())?;
        }
        for &id in &self.item_of {
            w.write_all(&id.to_le_bytes())?;
        }
        for &reg in &self.region_of {
            w.write_all(&reg.to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = File::create(path)?;
        self.write_to(BufWriter::new(file))
    }
}

fn renormalize_rows(data: &mut [f64], d: usize) -> std::result::Result<(), String> {
    for (i, row) in data.chunks_exact_mut(d).enumerate() {
        let nrm = norm(row);
        if nrm == 0.0 || !nrm.is_finite() {
            return Err(format!("row {i} has zero or non-finite norm"));
        }
        if (nrm - 1.0).abs() > UNIT_NORM_TOLERANCE {
            row.iter_mut().for_each(|x| *x /= nrm);
        }
    }
    Ok(())
}

fn index_items(item_of: &[u32], region_of: &[u32]) -> std::result::Result<Vec<Item>, String> {
    let mut by_item: BTreeMap<u32, Vec<(u32, usize)>> = BTreeMap::new();
    for (row, (&item, &region)) in item_of.iter().zip(region_of).enumerate() {
        by_item.entry(item).or_default().push((region, row));
    }
    let mut items = Vec::with_capacity(by_item.len());
    for (id, mut regions) in by_item {
        regions.sort_unstable();
        for (expected, &(region, row)) in regions.iter().enumerate() {
            if region as usize != expected {
                return Err(format!(
                    "item {id}: region ordinals must be 0..{} without gaps (row {row} has {region})",
                    regions.len()
                ));
            }
        }
        items.push(Item { id, rows: regions.into_iter().map(|(_, row)| row).collect() });
    }
    Ok(items)
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf)
        .map_err(|_| Error::format(format!("truncated header while reading {what}")))
}

fn read_u32<R: Read>(r: &mut R, what: &str) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b, what)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R, what: &str) -> Result<u64> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b, what)?;
    Ok(u64::from_le_bytes(b))
}

fn read_u32_array<R: Read>(r: &mut R, n: usize, what: &str) -> Result<Vec<u32>> {
    let mut out = Vec::with_capacity(n);
    let mut b = [0u8; 4];
    for i in 0..n {
        r.read_exact(&mut b)
            .map_err(|_| Error::format(format!("{what} truncated at row {i} of {n}")))?;
        out.push(u32::from_le_bytes(b));
    }
    Ok(out)
}
