//! Near-duplicate detection with MinHash signatures and banded LSH.
//!
//! Each document is reduced to its set of token shingles. A signature keeps,
//! for each of `num_hashes` seeded hash functions, the minimum hash over the
//! shingles; the fraction of agreeing slots between two signatures is an
//! unbiased estimate of the Jaccard similarity of the shingle sets.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::io::*;

pub const DEFAULT_NUM_HASHES: usize = 128;
pub const DEFAULT_SHINGLE_SIZE: usize = 3;
pub const DEFAULT_THRESHOLD: f64 = 0.8;
pub const DEFAULT_ROWS_PER_BAND: usize = 4;

#[derive(Debug, thiserror::Error)]
pub enum DedupError {
    #[error("cannot sign an empty shingle set")]
    EmptyShingleSet,
    #[error("signatures are not comparable: {0}")]
    SignatureMismatch(String),
    #[error("invalid dedup parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// All contiguous `n`-token windows joined by a single space.
pub fn shingles<S: AsRef<str>>(tokens: &[S], n: usize) -> BTreeSet<String> {
    assert!(n >= 1, "shingle size must be at least 1");
    if tokens.len() < n {
        return BTreeSet::new();
    }
    tokens
        .windows(n)
        .map(|w| w.iter().map(AsRef::as_ref).collect::<Vec<&str>>().join(" "))
        .collect()
}

// splitmix64 finalizer
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

// FNV-1a, stable across platforms and releases
fn base_hash(s: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    mix64(h)
}

fn salts(num_hashes: usize, seed: u64) -> Vec<u64> {
    (0..num_hashes as u64).map(|i| mix64(seed ^ mix64(i.wrapping_add(1)))).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MinHashSignature {
    pub doc_id: String,
    pub values: Vec<u64>,
    pub seed: u64,
}

/// MinHash signature of a shingle set. Hash function `i` is the base hash
/// of the shingle xored with a per-slot salt derived from `seed`, then mixed.
pub fn signature(
    doc_id: impl Into<String>,
    sh: &BTreeSet<String>,
    num_hashes: usize,
    seed: u64,
) -> Result<MinHashSignature, DedupError> {
    if sh.is_empty() {
        return Err(DedupError::EmptyShingleSet);
    }
    if num_hashes == 0 {
        return Err(DedupError::InvalidParams("num_hashes must be positive".into()));
    }
    let salts = salts(num_hashes, seed);
    let mut values = vec![u64::MAX; num_hashes];
    for s in sh {
        let h = base_hash(s);
        for (v, salt) in values.iter_mut().zip(&salts) {
            let hv = mix64(h ^ salt);
            if hv < *v {
                *v = hv;
            }
        }
    }
    Ok(MinHashSignature { doc_id: doc_id.into(), values, seed })
}

/// Signature of a token sequence. Documents shorter than `shingle_size`
/// are shingled as a single unit so that every non-empty document can be
/// grouped.
pub fn sign_tokens<S: AsRef<str>>(
    doc_id: impl Into<String>,
    tokens: &[S],
    shingle_size: usize,
    num_hashes: usize,
    seed: u64,
) -> Result<MinHashSignature, DedupError> {
    let n = shingle_size.min(tokens.len()).max(1);
    signature(doc_id, &shingles(tokens, n), num_hashes, seed)
}

/// Signs many documents in parallel, keeping input order.
pub fn sign_all<S: AsRef<str> + Sync>(
    docs: &[(String, Vec<S>)],
    shingle_size: usize,
    num_hashes: usize,
    seed: u64,
) -> Result<Vec<MinHashSignature>, DedupError> {
    use rayon::prelude::*;
    docs.par_iter().map(|(id, tokens)| sign_tokens(id.clone(), tokens, shingle_size, num_hashes, seed)).collect()
}

/// Fraction of slots on which the two signatures agree.
pub fn estimate_jaccard(a: &MinHashSignature, b: &MinHashSignature) -> Result<f64, DedupError> {
    if a.values.len() != b.values.len() {
        return Err(DedupError::SignatureMismatch(format!(
            "{} vs {} hashes",
            a.values.len(),
            b.values.len()
        )));
    }
    if a.seed != b.seed {
        return Err(DedupError::SignatureMismatch(format!("seed {} vs {}", a.seed, b.seed)));
    }
    let equal = a.values.iter().zip(&b.values).filter(|(x, y)| x == y).count();
    Ok(equal as f64 / a.values.len() as f64)
}

/// A set of near-duplicate documents and its representative (the
/// lexicographically smallest id).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DuplicateGroup {
    pub representative: String,
    pub members: BTreeSet<String>,
}

/// Partition of a corpus into near-duplicate groups, singletons included.
/// Groups are sorted by representative.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DuplicateGroups {
    pub groups: Vec<DuplicateGroup>,
}

impl DuplicateGroups {
    pub fn representatives(&self) -> BTreeSet<&str> {
        self.groups.iter().map(|g| g.representative.as_str()).collect()
    }

    /// Groups with more than one member.
    pub fn non_trivial(&self) -> impl Iterator<Item = &DuplicateGroup> {
        self.groups.iter().filter(|g| g.members.len() > 1)
    }

    /// Map from member id to its representative.
    pub fn representative_of(&self) -> HashMap<&str, &str> {
        self.groups
            .iter()
            .flat_map(|g| g.members.iter().map(move |m| (m.as_str(), g.representative.as_str())))
            .collect()
    }

    /// CSV with header `representative_id,member_id`, one row per member.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), DedupError> {
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(["representative_id", "member_id"])?;
        for g in &self.groups {
            for m in &g.members {
                csv.write_record([g.representative.as_str(), m.as_str()])?;
            }
        }
        csv.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self, DedupError> {
        let mut csv = csv::Reader::from_reader(r);
        let mut map: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        for rec in csv.records() {
            let rec = rec?;
            map.entry(rec[0].to_string()).or_default().insert(rec[1].to_string());
        }
        Ok(DuplicateGroups {
            groups: map.into_iter().map(|(representative, members)| DuplicateGroup { representative, members }).collect(),
        })
    }
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind { parent: (0..n).collect() }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // smaller index becomes root; keeps results independent of edge order
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}

/// Probability that a pair with Jaccard `j` shares at least one LSH bucket.
pub fn lsh_detection_probability(j: f64, bands: usize, rows: usize) -> f64 {
    1.0 - (1.0 - j.powi(rows as i32)).powi(bands as i32)
}

/// Groups signatures into connected components of the graph whose edges are
/// pairs with estimated similarity at or above `threshold`.
///
/// Candidate pairs come from banded LSH with `rows_per_band` rows per band
/// (the signature length must be a multiple of it); every candidate is then
/// verified with [`estimate_jaccard`].
pub fn group_duplicates_banded(
    corpus: &[MinHashSignature],
    threshold: f64,
    rows_per_band: usize,
) -> Result<DuplicateGroups, DedupError> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(DedupError::InvalidParams(format!("threshold {threshold} outside (0, 1]")));
    }
    let Some(first) = corpus.first() else {
        return Ok(DuplicateGroups::default());
    };
    let num_hashes = first.values.len();
    if rows_per_band == 0 || num_hashes % rows_per_band != 0 {
        return Err(DedupError::InvalidParams(format!(
            "{num_hashes} hashes cannot be split into bands of {rows_per_band} rows"
        )));
    }
    for s in corpus {
        if s.values.len() != num_hashes || s.seed != first.seed {
            return Err(DedupError::SignatureMismatch(format!("signature of {:?} differs in shape", s.doc_id)));
        }
    }
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    order.sort_by(|&a, &b| corpus[a].doc_id.cmp(&corpus[b].doc_id));

    let bands = num_hashes / rows_per_band;
    let mut uf = UnionFind::new(corpus.len());
    let mut checked: BTreeSet<(usize, usize)> = BTreeSet::new();
    for band in 0..bands {
        let lo = band * rows_per_band;
        let mut buckets: HashMap<&[u64], Vec<usize>> = HashMap::new();
        for &i in &order {
            buckets.entry(&corpus[i].values[lo..lo + rows_per_band]).or_default().push(i);
        }
        let mut keys: Vec<&Vec<usize>> = buckets.values().filter(|v| v.len() > 1).collect();
        keys.sort();
        for members in keys {
            for (x, &a) in members.iter().enumerate() {
                for &b in &members[x + 1..] {
                    let pair = (a.min(b), a.max(b));
                    if !checked.insert(pair) {
                        continue;
                    }
                    if estimate_jaccard(&corpus[a], &corpus[b])? >= threshold {
                        uf.union(a, b);
                    }
                }
            }
        }
    }

    let mut components: BTreeMap<usize, BTreeSet<String>> = BTreeMap::new();
    for i in 0..corpus.len() {
        let root = uf.find(i);
        components.entry(root).or_default().insert(corpus[i].doc_id.clone());
    }
    let mut groups: Vec<DuplicateGroup> = components
        .into_values()
        .map(|members| DuplicateGroup { representative: members.iter().next().cloned().unwrap(), members })
        .collect();
    groups.sort_by(|a, b| a.representative.cmp(&b.representative));
    Ok(DuplicateGroups { groups })
}

/// [`group_duplicates_banded`] with the default 4-row bands.
pub fn group_duplicates(corpus: &[MinHashSignature], threshold: f64) -> Result<DuplicateGroups, DedupError> {
    group_duplicates_banded(corpus, threshold, DEFAULT_ROWS_PER_BAND)
}

/// Binary signature file: `HZMH`, u16 version, u32 num_hashes, u64 seed,
/// u32 id width, u64 record count, then fixed-width records of the
/// zero-padded id followed by `num_hashes` u64 values. Little-endian.
pub fn write_signatures<W: Write>(mut w: W, sigs: &[MinHashSignature]) -> Result<(), DedupError> {
    let num_hashes = sigs.first().map_or(0, |s| s.values.len());
    let seed = sigs.first().map_or(0, |s| s.seed);
    if sigs.iter().any(|s| s.values.len() != num_hashes || s.seed != seed) {
        return Err(DedupError::SignatureMismatch("mixed signature shapes".into()));
    }
    let width = sigs.iter().map(|s| s.doc_id.len()).max().unwrap_or(0);
    w.write_all(b"HZMH")?;
    write_u16(&mut w, 1)?;
    write_u32(&mut w, len_u32(num_hashes)?)?;
    write_u64(&mut w, seed)?;
    write_u32(&mut w, len_u32(width)?)?;
    write_u64(&mut w, sigs.len() as u64)?;
    let mut id_buf = vec![0u8; width];
    for s in sigs {
        id_buf.fill(0);
        id_buf[..s.doc_id.len()].copy_from_slice(s.doc_id.as_bytes());
        w.write_all(&id_buf)?;
        for &v in &s.values {
            write_u64(&mut w, v)?;
        }
    }
    Ok(())
}

pub fn read_signatures<R: Read>(mut r: R) -> Result<Vec<MinHashSignature>, DedupError> {
    expect_magic(&mut r, b"HZMH")?;
    let version = read_u16(&mut r)?;
    if version != 1 {
        return Err(invalid(format!("unsupported signature file version {version}")).into());
    }
    let num_hashes = read_u32(&mut r)? as usize;
    let seed = read_u64(&mut r)?;
    let width = read_u32(&mut r)? as usize;
    let count = read_u64(&mut r)?;
    let mut out = Vec::new();
    let mut id_buf = vec![0u8; width];
    for _ in 0..count {
        r.read_exact(&mut id_buf)?;
        let end = id_buf.iter().position(|&b| b == 0).unwrap_or(width);
        let doc_id = String::from_utf8(id_buf[..end].to_vec()).map_err(|e| invalid(e.to_string()))?;
        let values = (0..num_hashes).map(|_| read_u64(&mut r)).collect::<Result<_, _>>()?;
        out.push(MinHashSignature { doc_id, values, seed });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn set(items: impl IntoIterator<Item = u32>) -> BTreeSet<String> {
        items.into_iter().map(|i| format!("s{i}")).collect()
    }

    fn exact_jaccard(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
        a.intersection(b).count() as f64 / a.union(b).count() as f64
    }

    #[test]
    fn shingle_examples() {
        assert_eq!(shingles(&["a", "b", "c"], 2), ["a b".to_string(), "b c".to_string()].into());
        assert!(shingles(&["a"], 2).is_empty());
        let tokens: Vec<String> = (0..50).map(|i| format!("w{}", i % 20)).collect();
        let brute: BTreeSet<String> = (0..48).map(|i| tokens[i..i + 3].join(" ")).collect();
        assert_eq!(shingles(&tokens, 3), brute);
        assert_eq!(brute.len(), 20);
    }

    #[test]
    fn signature_determinism_and_errors() {
        let s = set(0..30);
        assert_eq!(signature("a", &s, 128, 7).unwrap().values, signature("b", &s, 128, 7).unwrap().values);
        assert_ne!(signature("a", &s, 128, 7).unwrap().values, signature("a", &s, 128, 8).unwrap().values);
        assert!(matches!(signature("a", &BTreeSet::new(), 128, 1), Err(DedupError::EmptyShingleSet)));
        let a = signature("a", &s, 128, 7).unwrap();
        let b = signature("a", &s, 64, 7).unwrap();
        assert!(matches!(estimate_jaccard(&a, &b), Err(DedupError::SignatureMismatch(_))));
        let c = signature("a", &s, 128, 9).unwrap();
        assert!(matches!(estimate_jaccard(&a, &c), Err(DedupError::SignatureMismatch(_))));
        assert_eq!(estimate_jaccard(&a, &a).unwrap(), 1.0);
    }

    #[test]
    fn estimates_track_exact_jaccard() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut within = 0;
        let trials = 200;
        for _ in 0..trials {
            let shared = rng.random_range(5..60u32);
            let only_a = rng.random_range(0..40u32);
            let only_b = rng.random_range(0..40u32);
            let a = set((0..shared).chain(1000..1000 + only_a));
            let b = set((0..shared).chain(2000..2000 + only_b));
            let est = estimate_jaccard(&signature("a", &a, 128, 1).unwrap(), &signature("b", &b, 128, 1).unwrap())
                .unwrap();
            if (est - exact_jaccard(&a, &b)).abs() <= 0.1 {
                within += 1;
            }
        }
        assert!(within as f64 >= 0.95 * trials as f64, "{within}/{trials}");
        let a = set(0..500);
        let b = set(10_000..10_500);
        let est = estimate_jaccard(&signature("a", &a, 128, 1).unwrap(), &signature("b", &b, 128, 1).unwrap()).unwrap();
        assert!(est < 0.05);
    }

    #[test]
    fn slot_agreement_is_unbiased() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let trials = 300;
        let mut bias = 0.0;
        for t in 0..trials {
            let shared = rng.random_range(1..120u32);
            let only_a = rng.random_range(0..80u32);
            let only_b = rng.random_range(0..80u32);
            let a = set((0..shared).chain(1000..1000 + only_a));
            let b = set((0..shared).chain(2000..2000 + only_b));
            let seed = 100 + t as u64;
            let est =
                estimate_jaccard(&signature("a", &a, 128, seed).unwrap(), &signature("b", &b, 128, seed).unwrap())
                    .unwrap();
            bias += est - exact_jaccard(&a, &b);
        }
        let bias = bias / trials as f64;
        assert!(bias.abs() <= 0.03, "mean signed error {bias}");
    }

    #[test]
    fn banding_detects_threshold_pairs() {
        assert!(lsh_detection_probability(0.8, 32, 4) > 0.95);
        assert!(lsh_detection_probability(0.1, 32, 4) < 0.01);
    }

    #[test]
    fn transitive_groups() {
        let base: Vec<u32> = (0..100).collect();
        let a = set(base.iter().copied());
        let b = set(base.iter().copied().take(97).chain([500, 501, 502]));
        let c = set(base.iter().copied().take(98).chain([600, 601]));
        let d = set(1000..1100);
        let sigs: Vec<MinHashSignature> = [("c", &c), ("a", &a), ("d", &d), ("b", &b)]
            .into_iter()
            .map(|(id, s)| signature(id, s, 128, 5).unwrap())
            .collect();
        let groups = group_duplicates(&sigs, 0.8).unwrap();
        assert_eq!(groups.groups.len(), 2);
        assert_eq!(groups.groups[0].representative, "a");
        assert_eq!(groups.groups[0].members.len(), 3);
        assert_eq!(groups.groups[1].members, ["d".to_string()].into());
    }

    #[test]
    fn groups_csv_and_signature_file_round_trip() {
        let sigs: Vec<MinHashSignature> =
            (0..5).map(|i| signature(format!("doc-{i}"), &set(i * 10..i * 10 + 12), 16, 2).unwrap()).collect();
        let mut buf = Vec::new();
        write_signatures(&mut buf, &sigs).unwrap();
        assert_eq!(read_signatures(&buf[..]).unwrap(), sigs);
        let groups = group_duplicates(&sigs, 0.8).unwrap();
        let mut csv = Vec::new();
        groups.write_csv(&mut csv).unwrap();
        assert_eq!(DuplicateGroups::read_csv(&csv[..]).unwrap(), groups);
    }

    proptest! {
        #[test]
        fn estimate_is_symmetric(x in proptest::collection::btree_set(0u32..200, 1..50),
                                 y in proptest::collection::btree_set(0u32..200, 1..50)) {
            let a = signature("a", &set(x), 64, 11).unwrap();
            let b = signature("b", &set(y), 64, 11).unwrap();
            prop_assert_eq!(estimate_jaccard(&a, &b).unwrap(), estimate_jaccard(&b, &a).unwrap());
        }

        #[test]
        fn groups_partition_input(sets in proptest::collection::vec(proptest::collection::btree_set(0u32..30, 1..20), 1..15)) {
            let sigs: Vec<MinHashSignature> = sets
                .into_iter()
                .enumerate()
                .map(|(i, s)| signature(format!("{i:02}"), &set(s), 32, 4).unwrap())
                .collect();
            let groups = group_duplicates(&sigs, 0.5).unwrap();
            let mut seen = BTreeSet::new();
            for g in &groups.groups {
                prop_assert!(g.members.contains(&g.representative));
                prop_assert_eq!(g.members.iter().next(), Some(&g.representative));
                for m in &g.members {
                    prop_assert!(seen.insert(m.clone()));
                }
            }
            prop_assert_eq!(seen.len(), sigs.len());
        }
    }
}
