//! Cohort data model: samples, variants and a 2-bit packed call matrix.
//!
//! Calls are stored variant-major using the PLINK BED bit layout with A1 as
//! the minor allele: `00` hom-A1 (two minor alleles), `01` missing, `10` het,
//! `11` hom-A2. Each variant occupies `ceil(n / 4)` bytes and pad bits are
//! always zero.

mod plink;
mod stats;

use std::collections::{HashMap, HashSet};
use std::fmt;

pub use plink::{read_bed_bim_fam, write_bed_bim_fam};
pub use stats::{allele_stats, export_additive_table, AdditiveTable, AlleleStats, Imputation};

use crate::error::{Error, Result};

/// Additive genotype call: the number of minor alleles, or missing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum GenotypeCode {
    HomMajor = 0,
    Het = 1,
    HomMinor = 2,
    Missing = 3,
}

impl GenotypeCode {
    pub const ALL: [GenotypeCode; 4] = [
        GenotypeCode::HomMajor,
        GenotypeCode::Het,
        GenotypeCode::HomMinor,
        GenotypeCode::Missing,
    ];

    /// Minor-allele count, `None` for a missing call.
    #[inline]
    pub fn dosage(self) -> Option<u8> {
        match self {
            GenotypeCode::Missing => None,
            c => Some(c as u8),
        }
    }

    #[inline]
    pub fn from_dosage(d: u8) -> GenotypeCode {
        match d {
            0 => GenotypeCode::HomMajor,
            1 => GenotypeCode::Het,
            2 => GenotypeCode::HomMinor,
            _ => GenotypeCode::Missing,
        }
    }

    /// Swap the roles of the two alleles.
    #[inline]
    pub fn reflect(self) -> GenotypeCode {
        match self {
            GenotypeCode::HomMajor => GenotypeCode::HomMinor,
            GenotypeCode::HomMinor => GenotypeCode::HomMajor,
            c => c,
        }
    }

    #[inline]
    pub(crate) fn to_bits(self) -> u8 {
        match self {
            GenotypeCode::HomMinor => 0b00,
            GenotypeCode::Missing => 0b01,
            GenotypeCode::Het => 0b10,
            GenotypeCode::HomMajor => 0b11,
        }
    }

    #[inline]
    pub(crate) fn from_bits(bits: u8) -> GenotypeCode {
        match bits & 0b11 {
            0b00 => GenotypeCode::HomMinor,
            0b01 => GenotypeCode::Missing,
            0b10 => GenotypeCode::Het,
            _ => GenotypeCode::HomMajor,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Sex {
    Male,
    Female,
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Phenotype {
    Control,
    Case,
    Missing,
}

impl Phenotype {
    /// 1 for cases, 0 for controls.
    pub fn as_binary(self) -> Option<u8> {
        match self {
            Phenotype::Control => Some(0),
            Phenotype::Case => Some(1),
            Phenotype::Missing => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SampleRecord {
    pub sample_id: String,
    pub family_id: String,
    pub sex: Sex,
    pub phenotype: Phenotype,
}

impl SampleRecord {
    pub fn new(sample_id: impl Into<String>, sex: Sex, phenotype: Phenotype) -> Self {
        let sample_id = sample_id.into();
        SampleRecord {
            family_id: sample_id.clone(),
            sample_id,
            sex,
            phenotype,
        }
    }
}

/// Chromosome codes follow the PLINK numbering: 23 = X, 24 = Y, 25 = XY, 26 = MT.
pub const CHROM_X: u8 = 23;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct VariantRecord {
    pub variant_id: String,
    pub chromosome: u8,
    pub position: u64,
    pub allele_a1: String,
    pub allele_a2: String,
}

impl VariantRecord {
    pub fn new(variant_id: impl Into<String>, chromosome: u8, position: u64) -> Self {
        VariantRecord {
            variant_id: variant_id.into(),
            chromosome,
            position,
            allele_a1: "A".into(),
            allele_a2: "G".into(),
        }
    }
}

#[inline]
pub(crate) fn bytes_per_variant(n: usize) -> usize {
    n.div_ceil(4)
}

/// Reflect every call in a packed block (`00` <-> `11`) and re-zero the pad bits.
pub(crate) fn reflect_block(block: &mut [u8], n_samples: usize) {
    for b in block.iter_mut() {
        let hi = (*b >> 1) & 0x55;
        let lo = *b & 0x55;
        let same = !(hi ^ lo) & 0x55;
        *b ^= same | (same << 1);
    }
    zero_pad_bits(block, n_samples);
}

pub(crate) fn zero_pad_bits(block: &mut [u8], n_samples: usize) {
    let rem = n_samples % 4;
    if rem != 0 {
        if let Some(last) = block.last_mut() {
            *last &= (1u8 << (2 * rem)) - 1;
        }
    }
}

/// Immutable samples x variants genotype matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenotypeMatrix {
    samples: Vec<SampleRecord>,
    variants: Vec<VariantRecord>,
    packed: Vec<u8>,
    /// Set when A1 in the source file was the major allele and the codes were reflected on ingest.
    a1_swapped: Vec<bool>,
}

impl GenotypeMatrix {
    /// Build from variant-major columns of calls. Codes are taken as given
    /// (no minor-allele reorientation).
    pub fn from_columns(
        samples: Vec<SampleRecord>,
        variants: Vec<VariantRecord>,
        columns: &[Vec<GenotypeCode>],
    ) -> Result<Self> {
        if columns.len() != variants.len() {
            return Err(Error::InvalidInput(format!(
                "{} call columns for {} variants",
                columns.len(),
                variants.len()
            )));
        }
        let n = samples.len();
        let bpv = bytes_per_variant(n);
        let mut packed = vec![0u8; bpv * variants.len()];
        for (j, col) in columns.iter().enumerate() {
            if col.len() != n {
                return Err(Error::InvalidInput(format!(
                    "variant {} has {} calls, expected {n}",
                    variants[j].variant_id,
                    col.len()
                )));
            }
            pack_into(&mut packed[j * bpv..(j + 1) * bpv], col);
        }
        let a1_swapped = vec![false; variants.len()];
        Self::from_parts(samples, variants, packed, a1_swapped)
    }

    pub(crate) fn from_parts(
        samples: Vec<SampleRecord>,
        variants: Vec<VariantRecord>,
        packed: Vec<u8>,
        a1_swapped: Vec<bool>,
    ) -> Result<Self> {
        validate_samples(&samples)?;
        validate_variant_order(&variants)?;
        debug_assert_eq!(packed.len(), bytes_per_variant(samples.len()) * variants.len());
        debug_assert_eq!(a1_swapped.len(), variants.len());
        Ok(GenotypeMatrix {
            samples,
            variants,
            packed,
            a1_swapped,
        })
    }

    /// Reflect every variant whose A1 allele is observed to be the major one,
    /// recording a swap flag so the original orientation can be written back.
    pub fn orient_minor(mut self) -> Self {
        let n = self.samples.len();
        let bpv = bytes_per_variant(n);
        for j in 0..self.variants.len() {
            let st = allele_stats(&self, j, None);
            let called = 2 * (n - st.n_missing);
            if called > 0 && 2 * (2 * st.n_hom_minor + st.n_het) > called {
                reflect_block(&mut self.packed[j * bpv..(j + 1) * bpv], n);
                let v = &mut self.variants[j];
                std::mem::swap(&mut v.allele_a1, &mut v.allele_a2);
                self.a1_swapped[j] = !self.a1_swapped[j];
            }
        }
        self
    }

    pub fn n_samples(&self) -> usize {
        self.samples.len()
    }

    pub fn n_variants(&self) -> usize {
        self.variants.len()
    }

    pub fn samples(&self) -> &[SampleRecord] {
        &self.samples
    }

    pub fn variants(&self) -> &[VariantRecord] {
        &self.variants
    }

    pub fn a1_swapped(&self) -> &[bool] {
        &self.a1_swapped
    }

    pub fn variant_block(&self, variant: usize) -> &[u8] {
        let bpv = bytes_per_variant(self.samples.len());
        &self.packed[variant * bpv..(variant + 1) * bpv]
    }

    #[inline]
    pub fn call(&self, sample: usize, variant: usize) -> GenotypeCode {
        let block = self.variant_block(variant);
        GenotypeCode::from_bits(block[sample / 4] >> (2 * (sample % 4)))
    }

    /// Decode one variant into additive codes (`0/1/2`, `3` = missing).
    pub fn decode_variant_into(&self, variant: usize, out: &mut [u8]) {
        let n = self.samples.len();
        debug_assert!(out.len() >= n);
        let block = self.variant_block(variant);
        for (i, slot) in out.iter_mut().take(n).enumerate() {
            *slot = GenotypeCode::from_bits(block[i / 4] >> (2 * (i % 4))) as u8;
        }
    }

    pub fn variant_codes(&self, variant: usize) -> Vec<GenotypeCode> {
        (0..self.samples.len())
            .map(|i| self.call(i, variant))
            .collect()
    }

    pub fn sample_index(&self) -> HashMap<&str, usize> {
        self.samples
            .iter()
            .enumerate()
            .map(|(i, s)| (s.sample_id.as_str(), i))
            .collect()
    }

    pub fn variant_index(&self) -> HashMap<&str, usize> {
        self.variants
            .iter()
            .enumerate()
            .map(|(j, v)| (v.variant_id.as_str(), j))
            .collect()
    }

    /// Keep the named samples and variants, preserving matrix order.
    pub fn subset(&self, keep_samples: &HashSet<String>, keep_variants: &HashSet<String>) -> Result<Self> {
        let sidx = self.sample_index();
        for id in keep_samples {
            if !sidx.contains_key(id.as_str()) {
                return Err(Error::UnknownId(format!("sample {id}")));
            }
        }
        let vidx = self.variant_index();
        for id in keep_variants {
            if !vidx.contains_key(id.as_str()) {
                return Err(Error::UnknownId(format!("variant {id}")));
            }
        }
        let samples: Vec<usize> = (0..self.n_samples())
            .filter(|&i| keep_samples.contains(&self.samples[i].sample_id))
            .collect();
        let variants: Vec<usize> = (0..self.n_variants())
            .filter(|&j| keep_variants.contains(&self.variants[j].variant_id))
            .collect();
        Ok(self.subset_indices(&samples, &variants))
    }

    /// Index-based subset; both index lists must be ascending.
    pub fn subset_indices(&self, samples: &[usize], variants: &[usize]) -> Self {
        debug_assert!(samples.windows(2).all(|w| w[0] < w[1]));
        debug_assert!(variants.windows(2).all(|w| w[0] < w[1]));
        let n_new = samples.len();
        let bpv_new = bytes_per_variant(n_new);
        let all_samples = n_new == self.n_samples();
        let mut packed = vec![0u8; bpv_new * variants.len()];
        for (jn, &j) in variants.iter().enumerate() {
            let src = self.variant_block(j);
            let dst = &mut packed[jn * bpv_new..(jn + 1) * bpv_new];
            if all_samples {
                dst.copy_from_slice(src);
            } else {
                for (inew, &i) in samples.iter().enumerate() {
                    let bits = (src[i / 4] >> (2 * (i % 4))) & 0b11;
                    dst[inew / 4] |= bits << (2 * (inew % 4));
                }
            }
        }
        GenotypeMatrix {
            samples: samples.iter().map(|&i| self.samples[i].clone()).collect(),
            variants: variants.iter().map(|&j| self.variants[j].clone()).collect(),
            packed,
            a1_swapped: variants.iter().map(|&j| self.a1_swapped[j]).collect(),
        }
    }

    /// Binary phenotype per sample (`None` when missing).
    pub fn phenotypes(&self) -> Vec<Option<u8>> {
        self.samples.iter().map(|s| s.phenotype.as_binary()).collect()
    }
}

fn pack_into(block: &mut [u8], calls: &[GenotypeCode]) {
    block.fill(0);
    for (i, c) in calls.iter().enumerate() {
        block[i / 4] |= c.to_bits() << (2 * (i % 4));
    }
}

fn validate_samples(samples: &[SampleRecord]) -> Result<()> {
    let mut seen = HashSet::with_capacity(samples.len());
    for s in samples {
        if !seen.insert(s.sample_id.as_str()) {
            return Err(Error::InvalidInput(format!(
                "duplicate sample id {}",
                s.sample_id
            )));
        }
    }
    Ok(())
}

fn validate_variant_order(variants: &[VariantRecord]) -> Result<()> {
    for w in variants.windows(2) {
        if (w[1].chromosome, w[1].position) < (w[0].chromosome, w[0].position) {
            return Err(Error::InvalidInput(format!(
                "variants not sorted by (chromosome, position) at {}",
                w[1].variant_id
            )));
        }
    }
    Ok(())
}

impl fmt::Display for GenotypeCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.dosage() {
            Some(d) => write!(f, "{d}"),
            None => f.write_str("NA"),
        }
    }
}
