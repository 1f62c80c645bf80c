use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use super::{
    bytes_per_variant, reflect_block, GenotypeMatrix, Phenotype, SampleRecord, Sex, VariantRecord,
};
use crate::error::{Error, Result};

const BED_MAGIC: [u8; 2] = [0x6C, 0x1B];
const BED_VARIANT_MAJOR: u8 = 0x01;

fn with_ext(prefix: &Path, ext: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

/// Read a PLINK fileset `<prefix>.bed/.bim/.fam`.
///
/// A1 is taken to be the minor allele; variants where the data say
/// otherwise are reflected and flagged (see [`GenotypeMatrix::a1_swapped`]).
pub fn read_bed_bim_fam(prefix: impl AsRef<Path>) -> Result<GenotypeMatrix> {
    let prefix = prefix.as_ref();
    let fam_path = with_ext(prefix, "fam");
    let bim_path = with_ext(prefix, "bim");
    let bed_path = with_ext(prefix, "bed");

    let samples = parse_fam(&fam_path)?;
    let variants = parse_bim(&bim_path)?;
    let bed = fs::read(&bed_path).map_err(|e| Error::io(&bed_path, e))?;

    if bed.len() < 3 || bed[0..2] != BED_MAGIC {
        return Err(Error::format(&bed_path, "bad magic bytes"));
    }
    if bed[2] != BED_VARIANT_MAJOR {
        return Err(Error::format(&bed_path, "sample-major unsupported"));
    }
    let bpv = bytes_per_variant(samples.len());
    let expected = 3 + variants.len() * bpv;
    if bed.len() != expected {
        return Err(Error::format(
            &bed_path,
            format!(
                "length {} does not match {} samples x {} variants (expected {expected})",
                bed.len(),
                samples.len(),
                variants.len()
            ),
        ));
    }
    let mut packed = bed[3..].to_vec();
    // pad bits carry no data
    if bpv > 0 {
        for block in packed.chunks_mut(bpv) {
            super::zero_pad_bits(block, samples.len());
        }
    }
    let a1_swapped = vec![false; variants.len()];
    let matrix = GenotypeMatrix::from_parts(samples, variants, packed, a1_swapped)
        .map_err(|e| Error::format(&bim_path, e.to_string()))?;
    Ok(matrix.orient_minor())
}

/// Write `<prefix>.bed/.bim/.fam`, restoring the file's original allele
/// orientation for variants that were reflected on ingest.
pub fn write_bed_bim_fam(matrix: &GenotypeMatrix, prefix: impl AsRef<Path>) -> Result<()> {
    let prefix = prefix.as_ref();
    let n = matrix.n_samples();
    let bpv = bytes_per_variant(n);

    let bed_path = with_ext(prefix, "bed");
    let mut bed = Vec::with_capacity(3 + bpv * matrix.n_variants());
    bed.extend_from_slice(&BED_MAGIC);
    bed.push(BED_VARIANT_MAJOR);
    let mut scratch = vec![0u8; bpv];
    for j in 0..matrix.n_variants() {
        scratch.copy_from_slice(matrix.variant_block(j));
        if matrix.a1_swapped()[j] {
            reflect_block(&mut scratch, n);
        }
        bed.extend_from_slice(&scratch);
    }
    fs::write(&bed_path, &bed).map_err(|e| Error::io(&bed_path, e))?;

    let bim_path = with_ext(prefix, "bim");
    write_lines(&bim_path, matrix.variants().iter().zip(matrix.a1_swapped()), |w, (v, &sw)| {
        let (a1, a2) = if sw {
            (&v.allele_a2, &v.allele_a1)
        } else {
            (&v.allele_a1, &v.allele_a2)
        };
        writeln!(w, "{}\t{}\t0\t{}\t{}\t{}", v.chromosome, v.variant_id, v.position, a1, a2)
    })?;

    let fam_path = with_ext(prefix, "fam");
    write_lines(&fam_path, matrix.samples().iter(), |w, s| {
        let sex = match s.sex {
            Sex::Male => "1",
            Sex::Female => "2",
            Sex::Unknown => "0",
        };
        let pheno = match s.phenotype {
            Phenotype::Control => "1",
            Phenotype::Case => "2",
            Phenotype::Missing => "-9",
        };
        writeln!(w, "{} {} 0 0 {} {}", s.family_id, s.sample_id, sex, pheno)
    })?;
    Ok(())
}

fn write_lines<I, T, F>(path: &Path, items: I, mut f: F) -> Result<()>
where
    I: Iterator<Item = T>,
    F: FnMut(&mut BufWriter<fs::File>, T) -> std::io::Result<()>,
{
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for item in items {
        f(&mut w, item).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn parse_fam(path: &Path) -> Result<Vec<SampleRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 6 {
            return Err(Error::format(
                path,
                format!("line {}: expected 6 columns, found {}", lineno + 1, f.len()),
            ));
        }
        let sex = match f[4] {
            "1" => Sex::Male,
            "2" => Sex::Female,
            _ => Sex::Unknown,
        };
        let phenotype = match f[5] {
            "1" => Phenotype::Control,
            "2" => Phenotype::Case,
            "0" | "-9" => Phenotype::Missing,
            other => {
                return Err(Error::format(
                    path,
                    format!("line {}: phenotype {other:?} is not a case/control code", lineno + 1),
                ))
            }
        };
        out.push(SampleRecord {
            family_id: f[0].to_string(),
            sample_id: f[1].to_string(),
            sex,
            phenotype,
        });
    }
    Ok(out)
}

pub(crate) fn parse_chromosome(s: &str) -> Option<u8> {
    let s = s
        .strip_prefix("chr")
        .or_else(|| s.strip_prefix("CHR"))
        .unwrap_or(s);
    match s {
        "X" | "x" => Some(23),
        "Y" | "y" => Some(24),
        "XY" | "xy" => Some(25),
        "MT" | "M" | "mt" => Some(26),
        _ => s.parse::<u8>().ok().filter(|c| (1..=26).contains(c)),
    }
}

fn parse_bim(path: &Path) -> Result<Vec<VariantRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 6 {
            return Err(Error::format(
                path,
                format!("line {}: expected 6 columns, found {}", lineno + 1, f.len()),
            ));
        }
        let chromosome = parse_chromosome(f[0]).ok_or_else(|| {
            Error::format(path, format!("line {}: bad chromosome {:?}", lineno + 1, f[0]))
        })?;
        let position = f[3].parse::<u64>().map_err(|_| {
            Error::format(path, format!("line {}: bad position {:?}", lineno + 1, f[3]))
        })?;
        out.push(VariantRecord {
            variant_id: f[1].to_string(),
            chromosome,
            position,
            allele_a1: f[4].to_string(),
            allele_a2: f[5].to_string(),
        });
    }
    Ok(out)
}
