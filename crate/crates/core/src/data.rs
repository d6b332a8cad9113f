//! Synthetic multimodal domains and the OVEM embedding file format.
//!
//! The generator stands in for frozen image/text encoders. Each category has
//! a prototype direction; every domain applies its own near-identity rotation
//! and offset to visual and tactile samples, while tactile samples only keep
//! a fixed half of the coordinates. Language samples live in the canonical
//! (unrotated) frame and exist only for the source domain.
//!
//! OVEM layout (little-endian):
//!
//! ```text
//! "OVEM"  version:u32  dim:u32  count:u64
//! count × { category:u16 domain:u16 modality:u8 pair_id:u64 dim × f32 }
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::numeric::Matrix;

pub const OVEM_MAGIC: &[u8; 4] = b"OVEM";
pub const OVEM_VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 4 + 8;
const RECORD_PREFIX_LEN: usize = 2 + 2 + 1 + 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum Modality {
    Vis = 0,
    Tac = 1,
    Lang = 2,
}

impl TryFrom<u8> for Modality {
    type Error = u8;

    fn try_from(v: u8) -> std::result::Result<Self, u8> {
        match v {
            0 => Ok(Self::Vis),
            1 => Ok(Self::Tac),
            2 => Ok(Self::Lang),
            other => Err(other),
        }
    }
}

/// One embedding with its labels. The unit of every stored dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledEmbedding {
    pub vector: Vec<f64>,
    pub category: u16,
    pub domain: u16,
    pub modality: Modality,
    pub pair_id: u64,
}

/// A visual/tactile pair from one domain.
#[derive(Clone, Debug, PartialEq)]
pub struct PairedSample {
    pub vis: Vec<f64>,
    pub tac: Vec<f64>,
    pub category: usize,
    pub domain: u16,
    pub pair_id: u64,
}

/// Paired samples of one domain, plus language embeddings per category when
/// the domain is a training source.
#[derive(Clone, Debug, PartialEq)]
pub struct Domain {
    pub id: u16,
    pub dim: usize,
    pub pairs: Vec<PairedSample>,
    /// `language[c]` holds the language embeddings of category `c`; empty
    /// for target domains.
    pub language: Vec<Vec<Vec<f64>>>,
}

impl Domain {
    pub fn has_language(&self) -> bool {
        self.language.iter().any(|l| !l.is_empty())
    }

    pub fn labels(&self) -> Vec<usize> {
        self.pairs.iter().map(|p| p.category).collect()
    }

    /// Flattens into records: VIS then TAC for each pair, then LANG.
    pub fn to_records(&self) -> Vec<LabeledEmbedding> {
        let mut out = Vec::with_capacity(2 * self.pairs.len());
        for p in &self.pairs {
            for (modality, v) in [(Modality::Vis, &p.vis), (Modality::Tac, &p.tac)] {
                out.push(LabeledEmbedding {
                    vector: v.clone(),
                    category: p.category as u16,
                    domain: p.domain,
                    modality,
                    pair_id: p.pair_id,
                });
            }
        }
        let mut lang_id = 0u64;
        for (c, samples) in self.language.iter().enumerate() {
            for v in samples {
                out.push(LabeledEmbedding {
                    vector: v.clone(),
                    category: c as u16,
                    domain: self.id,
                    modality: Modality::Lang,
                    pair_id: lang_id,
                });
                lang_id += 1;
            }
        }
        out
    }

    /// Rebuilds a domain from records, pairing VIS and TAC by pair id.
    pub fn from_records(dim: usize, classes: usize, records: &[LabeledEmbedding]) -> Result<Self> {
        let mut vis: BTreeMap<u64, &LabeledEmbedding> = BTreeMap::new();
        let mut tac: BTreeMap<u64, &LabeledEmbedding> = BTreeMap::new();
        let mut language = vec![Vec::new(); classes];
        let mut domain_id = None;
        for r in records {
            if r.vector.len() != dim {
                return Err(Error::Dimension(format!("record of length {} in a {dim}-dim set", r.vector.len())));
            }
            if r.category as usize >= classes {
                return Err(Error::Config(format!("category {} with {classes} classes", r.category)));
            }
            match r.modality {
                Modality::Lang => language[r.category as usize].push(r.vector.clone()),
                Modality::Vis | Modality::Tac => {
                    if *domain_id.get_or_insert(r.domain) != r.domain {
                        return Err(Error::Config("records span more than one domain".into()));
                    }
                    let slot = if r.modality == Modality::Vis { &mut vis } else { &mut tac };
                    if slot.insert(r.pair_id, r).is_some() {
                        return Err(Error::IncompleteSample(format!("duplicate {:?} for pair {}", r.modality, r.pair_id)));
                    }
                }
            }
        }
        let mut pairs = Vec::with_capacity(vis.len());
        for (id, v) in &vis {
            let t = tac
                .remove(id)
                .ok_or_else(|| Error::IncompleteSample(format!("pair {id} has no tactile partner")))?;
            if t.category != v.category {
                return Err(Error::IncompleteSample(format!("pair {id} mixes categories")));
            }
            pairs.push(PairedSample {
                vis: v.vector.clone(),
                tac: t.vector.clone(),
                category: v.category as usize,
                domain: v.domain,
                pair_id: *id,
            });
        }
        if let Some(id) = tac.keys().next() {
            return Err(Error::IncompleteSample(format!("pair {id} has no visual partner")));
        }
        Ok(Self { id: domain_id.unwrap_or(0), dim, pairs, language })
    }
}

/// One source domain, a held-out split of it, and unseen targets.
#[derive(Clone, Debug, PartialEq)]
pub struct DomainSuite {
    pub classes: usize,
    pub dim: usize,
    pub source: Domain,
    pub source_heldout: Domain,
    pub targets: Vec<Domain>,
    /// Category prototypes (rows), kept for diagnostics.
    pub prototypes: Matrix,
}

/// Parameters of the synthetic generator.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub classes: usize,
    pub dim: usize,
    pub per_class: usize,
    pub heldout_per_class: usize,
    pub targets: usize,
    /// Domain shift strength. Zero makes every domain identical.
    pub shift: f64,
    /// Norm of each category prototype.
    pub prototype_scale: f64,
    /// Per-coordinate variance of sample noise.
    pub noise_var: f64,
    pub language_per_class: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            classes: 5,
            dim: 32,
            per_class: 40,
            heldout_per_class: 20,
            targets: 3,
            shift: 0.4,
            prototype_scale: 2.0,
            noise_var: 0.1,
            language_per_class: 80,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(Error::Config(format!("need at least 2 classes, got {}", self.classes)));
        }
        if self.dim < 8 {
            return Err(Error::Config(format!("need dim >= 8, got {}", self.dim)));
        }
        if self.classes > self.dim {
            return Err(Error::Config("more classes than dimensions".into()));
        }
        if self.per_class == 0 {
            return Err(Error::Config("per_class must be positive".into()));
        }
        if !(self.shift >= 0.0 && self.shift.is_finite()) {
            return Err(Error::Config(format!("shift must be finite and >= 0, got {}", self.shift)));
        }
        if !(self.noise_var >= 0.0) || !(self.prototype_scale > 0.0) {
            return Err(Error::Config("noise variance and prototype scale must be positive".into()));
        }
        Ok(())
    }
}

/// Per-domain transform `x ↦ Q·x + b`.
#[derive(Clone, Debug)]
pub struct DomainTransform {
    pub rotation: Matrix,
    pub offset: Vec<f64>,
}

impl DomainTransform {
    fn draw(dim: usize, shift: f64, rng: &mut ChaCha8Rng) -> Self {
        let scale = 1.0 / (dim as f64).sqrt();
        let g = Matrix::from_fn(dim, dim, |_, _| gauss(rng) * scale);
        let perturbed = Matrix::identity(dim).add(&g.scale(shift)).expect("square");
        let rotation = orthonormalize_columns(&perturbed);
        let offset = (0..dim).map(|_| gauss(rng) * shift * scale).collect();
        Self { rotation, offset }
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        (0..x.len())
            .map(|i| {
                let row = self.rotation.row(i);
                row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + self.offset[i]
            })
            .collect()
    }
}

fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample::<f64, _>(StandardNormal)
}

/// Modified Gram-Schmidt on columns. Keeps a positive diagonal in the
/// implied `R`, so near-identity inputs map to near-identity rotations.
fn orthonormalize_columns(m: &Matrix) -> Matrix {
    let (rows, cols) = m.shape();
    let mut q: Vec<Vec<f64>> = (0..cols).map(|c| m.column(c)).collect();
    for c in 0..cols {
        for prev in 0..c {
            let d: f64 = q[c].iter().zip(&q[prev]).map(|(a, b)| a * b).sum();
            for i in 0..rows {
                q[c][i] -= d * q[prev][i];
            }
        }
        let n = q[c].iter().map(|x| x * x).sum::<f64>().sqrt();
        q[c].iter_mut().for_each(|x| *x /= n);
    }
    Matrix::from_fn(rows, cols, |r, c| q[c][r])
}

/// Number of coordinates the tactile surrogate keeps (the first `⌈D/2⌉`).
pub fn tactile_kept(dim: usize) -> usize {
    dim.div_ceil(2)
}

/// Builds a deterministic suite from `config`.
pub fn synth_suite(config: &SynthConfig) -> Result<DomainSuite> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (c, d) = (config.classes, config.dim);

    let raw = Matrix::from_fn(d, c, |_, _| gauss(&mut rng));
    let basis = orthonormalize_columns(&raw);
    let prototypes = Matrix::from_fn(c, d, |k, i| basis[(i, k)] * config.prototype_scale);

    let noise_sd = config.noise_var.sqrt();
    let kept = tactile_kept(d);
    let mut next_pair = 0u64;

    let mut draw_domain = |id: u16, transform: &DomainTransform, per_class: usize, rng: &mut ChaCha8Rng| {
        let mut pairs = Vec::with_capacity(per_class * c);
        for k in 0..c {
            for _ in 0..per_class {
                let vis_in: Vec<f64> = prototypes.row(k).iter().map(|p| p + noise_sd * gauss(rng)).collect();
                let tac_in: Vec<f64> = prototypes
                    .row(k)
                    .iter()
                    .enumerate()
                    .map(|(i, p)| {
                        let x = p + noise_sd * gauss(rng);
                        if i < kept {
                            x
                        } else {
                            0.0
                        }
                    })
                    .collect();
                pairs.push(PairedSample {
                    vis: transform.apply(&vis_in),
                    tac: transform.apply(&tac_in),
                    category: k,
                    domain: id,
                    pair_id: next_pair,
                });
                next_pair += 1;
            }
        }
        Domain { id, dim: d, pairs, language: vec![Vec::new(); c] }
    };

    let source_transform = DomainTransform::draw(d, config.shift, &mut rng);
    let mut source = draw_domain(0, &source_transform, config.per_class, &mut rng);
    let source_heldout = draw_domain(0, &source_transform, config.heldout_per_class, &mut rng);
    source.language = (0..c)
        .map(|k| {
            (0..config.language_per_class)
                .map(|_| prototypes.row(k).iter().map(|p| p + noise_sd * gauss(&mut rng)).collect())
                .collect()
        })
        .collect();

    let mut targets = Vec::with_capacity(config.targets);
    for t in 0..config.targets {
        let transform = DomainTransform::draw(d, config.shift, &mut rng);
        let domain = draw_domain(t as u16 + 1, &transform, config.per_class, &mut rng);
        debug_assert!(!domain.has_language());
        targets.push(domain);
    }

    Ok(DomainSuite { classes: c, dim: d, source, source_heldout, targets, prototypes })
}

/// Writes records in the OVEM format. Vectors are stored as `f32`.
pub fn save_embeddings(path: &Path, dim: usize, records: &[LabeledEmbedding]) -> Result<()> {
    std::fs::write(path, encode_embeddings(dim, records)?)?;
    Ok(())
}

pub fn encode_embeddings(dim: usize, records: &[LabeledEmbedding]) -> Result<Vec<u8>> {
    let mut buf = Vec::with_capacity(HEADER_LEN + records.len() * (RECORD_PREFIX_LEN + 4 * dim));
    buf.extend_from_slice(OVEM_MAGIC);
    buf.extend_from_slice(&OVEM_VERSION.to_le_bytes());
    buf.extend_from_slice(&(dim as u32).to_le_bytes());
    buf.extend_from_slice(&(records.len() as u64).to_le_bytes());
    for r in records {
        if r.vector.len() != dim {
            return Err(Error::Dimension(format!("record of length {} in a {dim}-dim file", r.vector.len())));
        }
        buf.extend_from_slice(&r.category.to_le_bytes());
        buf.extend_from_slice(&r.domain.to_le_bytes());
        buf.push(r.modality as u8);
        buf.extend_from_slice(&r.pair_id.to_le_bytes());
        for x in &r.vector {
            buf.extend_from_slice(&(*x as f32).to_le_bytes());
        }
    }
    Ok(buf)
}

/// Reads an OVEM file, returning `(dim, records)`.
pub fn load_embeddings(path: &Path) -> Result<(usize, Vec<LabeledEmbedding>)> {
    decode_embeddings(&std::fs::read(path)?)
}

pub fn decode_embeddings(bytes: &[u8]) -> Result<(usize, Vec<LabeledEmbedding>)> {
    let mut r = ByteReader { bytes, pos: 0 };
    let magic = r.take(4, "magic")?;
    if magic != OVEM_MAGIC {
        return Err(r.error_at(0, format!("bad magic {magic:?}, expected \"OVEM\"")));
    }
    let version = r.u32("version")?;
    if version != OVEM_VERSION {
        return Err(r.error_at(4, format!("unsupported version {version}")));
    }
    let dim = r.u32("dim")? as usize;
    if dim == 0 {
        return Err(r.error_at(8, "dimension is zero".into()));
    }
    let count = r.u64("record count")?;
    let record_len = (RECORD_PREFIX_LEN + 4 * dim) as u64;
    let remaining = (bytes.len() - r.pos) as u64;
    if count.checked_mul(record_len).is_none_or(|need| need > remaining) {
        return Err(r.error_at(
            r.pos as u64,
            format!("{count} records of {record_len} bytes do not fit in {remaining} remaining bytes"),
        ));
    }
    let mut records = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let category = r.u16("category")?;
        let domain = r.u16("domain")?;
        let at = r.pos as u64;
        let modality = Modality::try_from(r.take(1, "modality")?[0])
            .map_err(|m| r.error_at(at, format!("unknown modality {m}")))?;
        let pair_id = r.u64("pair id")?;
        let mut vector = Vec::with_capacity(dim);
        for _ in 0..dim {
            let at = r.pos as u64;
            let x = f32::from_le_bytes(r.take(4, "vector")?.try_into().expect("4 bytes"));
            if !x.is_finite() {
                return Err(r.error_at(at, "non-finite embedding value".into()));
            }
            vector.push(x as f64);
        }
        records.push(LabeledEmbedding { vector, category, domain, modality, pair_id });
    }
    if r.pos != bytes.len() {
        return Err(r.error_at(r.pos as u64, format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok((dim, records))
}

pub(crate) struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    pub(crate) fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    pub(crate) fn pos(&self) -> usize {
        self.pos
    }

    pub(crate) fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    pub(crate) fn error_at(&self, offset: u64, message: String) -> Error {
        Error::Format { offset, message }
    }

    pub(crate) fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(self.error_at(self.pos as u64, format!("truncated while reading {what}")));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    pub(crate) fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().expect("2 bytes")))
    }

    pub(crate) fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    pub(crate) fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }
}

/// Mean over categories of the distance between a domain's class means and
/// the source's class means (visual modality).
pub fn mean_class_displacement(source: &Domain, other: &Domain, classes: usize) -> f64 {
    let means = |d: &Domain| -> Vec<Vec<f64>> {
        let mut sums = vec![vec![0.0; d.dim]; classes];
        let mut counts = vec![0usize; classes];
        for p in &d.pairs {
            counts[p.category] += 1;
            for (s, x) in sums[p.category].iter_mut().zip(&p.vis) {
                *s += x;
            }
        }
        sums.into_iter()
            .zip(counts)
            .map(|(s, n)| s.into_iter().map(|x| x / n.max(1) as f64).collect())
            .collect()
    };
    let (a, b) = (means(source), means(other));
    a.iter()
        .zip(&b)
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt())
        .sum::<f64>()
        / classes as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SynthConfig {
        SynthConfig { per_class: 6, heldout_per_class: 3, language_per_class: 4, ..SynthConfig::default() }
    }

    #[test]
    fn zero_shift_makes_identical_transforms() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = DomainTransform::draw(8, 0.0, &mut rng);
        assert_eq!(t.rotation, Matrix::identity(8));
        assert!(t.offset.iter().all(|x| *x == 0.0));
    }

    #[test]
    fn same_seed_same_suite() {
        let a = synth_suite(&small()).unwrap();
        let b = synth_suite(&small()).unwrap();
        assert_eq!(a, b);
        let c = synth_suite(&SynthConfig { seed: 1, ..small() }).unwrap();
        assert_ne!(a.source.pairs[0].vis, c.source.pairs[0].vis);
    }

    #[test]
    fn suite_structure() {
        let s = synth_suite(&small()).unwrap();
        assert_eq!(s.source.pairs.len(), 30);
        assert_eq!(s.source_heldout.pairs.len(), 15);
        assert_eq!(s.targets.len(), 3);
        assert!(s.source.language.iter().all(|l| l.len() == 4));
        for t in &s.targets {
            assert!(!t.has_language());
            assert_eq!(t.to_records().iter().filter(|r| r.modality == Modality::Lang).count(), 0);
        }
        let kept = tactile_kept(32);
        // Zeroed tactile coordinates only move through the domain transform,
        // so with zero shift they stay exactly zero.
        let flat = synth_suite(&SynthConfig { shift: 0.0, ..small() }).unwrap();
        assert!(flat.source.pairs.iter().all(|p| p.tac[kept..].iter().all(|x| *x == 0.0)));
    }

    #[test]
    fn pairing_is_one_to_one() {
        let s = synth_suite(&small()).unwrap();
        let records = s.targets[0].to_records();
        let back = Domain::from_records(32, 5, &records).unwrap();
        assert_eq!(back.pairs.len(), s.targets[0].pairs.len());
        let mut broken = records.clone();
        broken.retain(|r| !(r.pair_id == records[0].pair_id && r.modality == Modality::Tac));
        assert!(matches!(Domain::from_records(32, 5, &broken), Err(Error::IncompleteSample(_))));
    }

    #[test]
    fn invalid_config_rejected() {
        assert!(synth_suite(&SynthConfig { classes: 1, ..small() }).is_err());
        assert!(synth_suite(&SynthConfig { dim: 4, ..small() }).is_err());
        assert!(synth_suite(&SynthConfig { shift: -1.0, ..small() }).is_err());
    }

    #[test]
    fn round_trip_at_single_precision() {
        let records = vec![
            LabeledEmbedding { vector: vec![0.1, -2.5, 3.0], category: 1, domain: 0, modality: Modality::Vis, pair_id: 7 },
            LabeledEmbedding { vector: vec![1.0, 0.0, -0.3], category: 1, domain: 0, modality: Modality::Tac, pair_id: 7 },
            LabeledEmbedding { vector: vec![9.0, 8.0, 7.0], category: 0, domain: 0, modality: Modality::Lang, pair_id: 0 },
        ];
        let bytes = encode_embeddings(3, &records).unwrap();
        let (dim, back) = decode_embeddings(&bytes).unwrap();
        assert_eq!(dim, 3);
        for (a, b) in records.iter().zip(&back) {
            let rounded: Vec<f64> = a.vector.iter().map(|x| *x as f32 as f64).collect();
            assert_eq!(b.vector, rounded);
            assert_eq!((a.category, a.domain, a.modality, a.pair_id), (b.category, b.domain, b.modality, b.pair_id));
        }
    }

    #[test]
    fn hand_built_bytes_parse() {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"OVEM");
        bytes.extend_from_slice(&[1, 0, 0, 0]); // version
        bytes.extend_from_slice(&[2, 0, 0, 0]); // dim
        bytes.extend_from_slice(&[1, 0, 0, 0, 0, 0, 0, 0]); // count
        bytes.extend_from_slice(&[3, 0]); // category 3
        bytes.extend_from_slice(&[2, 0]); // domain 2
        bytes.push(1); // TAC
        bytes.extend_from_slice(&[42, 0, 0, 0, 0, 0, 0, 0]); // pair id
        bytes.extend_from_slice(&[0x00, 0x00, 0x80, 0x3f]); // 1.0f32
        bytes.extend_from_slice(&[0x00, 0x00, 0x00, 0xc0]); // -2.0f32
        let (dim, recs) = decode_embeddings(&bytes).unwrap();
        assert_eq!(dim, 2);
        assert_eq!(
            recs,
            vec![LabeledEmbedding { vector: vec![1.0, -2.0], category: 3, domain: 2, modality: Modality::Tac, pair_id: 42 }]
        );
    }

    #[test]
    fn malformed_files_report_offsets() {
        assert!(matches!(decode_embeddings(&[]), Err(Error::Format { offset: 0, .. })));
        assert!(matches!(decode_embeddings(b"OVAT\x01\0\0\0"), Err(Error::Format { offset: 0, .. })));
        let mut v = encode_embeddings(2, &[]).unwrap();
        v[4] = 9;
        assert!(matches!(decode_embeddings(&v), Err(Error::Format { offset: 4, .. })));
        let rec = LabeledEmbedding { vector: vec![1.0, 2.0], category: 0, domain: 0, modality: Modality::Vis, pair_id: 0 };
        let full = encode_embeddings(2, &[rec]).unwrap();
        let truncated = &full[..full.len() - 3];
        assert!(matches!(decode_embeddings(truncated), Err(Error::Format { offset: 20, .. })));
        let mut bad_mod = full.clone();
        bad_mod[HEADER_LEN + 4] = 7;
        assert!(matches!(decode_embeddings(&bad_mod), Err(Error::Format { offset: 24, .. })));
    }

    #[test]
    fn displacement_grows_with_shift() {
        let mut means = Vec::new();
        for shift in [0.1, 0.2, 0.4] {
            let mut total = 0.0;
            for seed in 0..5 {
                let s = synth_suite(&SynthConfig { shift, seed, ..small() }).unwrap();
                total += s.targets.iter().map(|t| mean_class_displacement(&s.source, t, 5)).sum::<f64>();
            }
            means.push(total);
        }
        assert!(means[0] < means[1] && means[1] < means[2], "{means:?}");
    }
}
