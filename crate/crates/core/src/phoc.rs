//! Pyramidal Histogram of Characters (PHOC) encoding.
//!
//! A PHOC splits a word into `L` equal regions at each pyramid level
//! `L ∈ {2, 3, 4, 5}` and records, per region, which characters of the
//! 36-symbol alphabet (`a-z`, `0-9`) fall inside it. Character `i` of an
//! `n`-character word occupies `[i/n, (i+1)/n]` and is counted in a region
//! when at least half of its interval lies inside that region.
//!
//! Layout: level blocks in order 2, 3, 4, 5; inside a level, region-major,
//! then character index (`a`=0 .. `z`=25, `0`=26 .. `9`=35).

use std::fmt;

use crate::error::{Error, Result};

pub const ALPHABET_SIZE: usize = 36;
pub const LEVELS: [usize; 4] = [2, 3, 4, 5];
pub const PHOC_DIM: usize = (2 + 3 + 4 + 5) * ALPHABET_SIZE;

/// Lowercase `raw` and drop everything outside `[a-z0-9]`.
pub fn normalize_token(raw: &str) -> String {
    raw.chars()
        .flat_map(char::to_lowercase)
        .filter(|c| c.is_ascii_lowercase() || c.is_ascii_digit())
        .collect()
}

fn char_index(c: char) -> Option<usize> {
    match c {
        'a'..='z' => Some(c as usize - 'a' as usize),
        '0'..='9' => Some(26 + c as usize - '0' as usize),
        _ => None,
    }
}

/// Offset of the first entry of pyramid level `level` in the vector.
pub fn level_offset(level: usize) -> usize {
    LEVELS
        .iter()
        .take_while(|&&l| l < level)
        .map(|l| l * ALPHABET_SIZE)
        .sum()
}

/// A 504-dimensional attribute vector. Entries lie in `[0, 1]`.
#[derive(Clone, PartialEq)]
pub struct PhocVector {
    values: Vec<f64>,
    sq_norm: f64,
}

impl PhocVector {
    pub fn zeros() -> Self {
        PhocVector {
            values: vec![0.0; PHOC_DIM],
            sq_norm: 0.0,
        }
    }

    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        if values.len() != PHOC_DIM {
            return Err(Error::Shape {
                context: "PHOC vector",
                expected: PHOC_DIM,
                got: values.len(),
            });
        }
        if let Some(bad) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidArgument(format!(
                "PHOC entry {bad} outside [0, 1]"
            )));
        }
        let sq_norm = values.iter().map(|v| v * v).sum();
        Ok(PhocVector { values, sq_norm })
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn norm(&self) -> f64 {
        self.sq_norm.sqrt()
    }

    pub fn is_binary(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0 || v == 1.0)
    }

    pub fn count_ones(&self) -> usize {
        self.values.iter().filter(|&&v| v == 1.0).count()
    }
}

impl fmt::Debug for PhocVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let set: Vec<usize> = self
            .values
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, _)| i)
            .collect();
        f.debug_struct("PhocVector").field("nonzero", &set).finish()
    }
}

/// Encode a normalized word. Rejects characters outside `[a-z0-9]`.
pub fn phoc_encode(word: &str) -> Result<PhocVector> {
    let chars: Vec<usize> = word
        .chars()
        .map(|c| {
            char_index(c).ok_or_else(|| Error::InvalidToken {
                token: word.to_owned(),
            })
        })
        .collect::<Result<_>>()?;

    let n = chars.len();
    let mut values = vec![0.0; PHOC_DIM];
    for &level in &LEVELS {
        let offset = level_offset(level);
        // Work in units of 1/(n*level): character i spans [i*level, (i+1)*level],
        // region r spans [r*n, (r+1)*n]. Counted iff overlap >= level/2 units.
        for (i, &ci) in chars.iter().enumerate() {
            let (lo, hi) = (i * level, (i + 1) * level);
            let first = lo / n;
            let last = ((hi - 1) / n).min(level - 1);
            for region in first..=last {
                let overlap = hi.min((region + 1) * n).saturating_sub(lo.max(region * n));
                if 2 * overlap >= level {
                    values[offset + region * ALPHABET_SIZE + ci] = 1.0;
                }
            }
        }
    }
    let sq_norm = values.iter().sum();
    Ok(PhocVector { values, sq_norm })
}

/// Cosine similarity; zero when either vector has zero norm.
pub fn phoc_cosine(a: &PhocVector, b: &PhocVector) -> f64 {
    if a.sq_norm == 0.0 || b.sq_norm == 0.0 {
        return 0.0;
    }
    let dot: f64 = a.values.iter().zip(&b.values).map(|(x, y)| x * y).sum();
    // sqrt of the product keeps cos(a, a) exactly 1 for binary vectors
    (dot / (a.sq_norm * b.sq_norm).sqrt()).clamp(-1.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const ALPHABET: &[u8] = b"abcdefghijklmnopqrstuvwxyz0123456789";

    /// Brute-force occupancy with real-valued intervals, looping over every
    /// (level, region, character position).
    fn oracle(word: &str) -> Vec<f64> {
        let chars: Vec<char> = word.chars().collect();
        let n = chars.len() as f64;
        let mut out = vec![0.0; PHOC_DIM];
        let mut offset = 0;
        for level in [2usize, 3, 4, 5] {
            let lf = level as f64;
            for r in 0..level {
                let (r_lo, r_hi) = (r as f64 / lf, (r + 1) as f64 / lf);
                for (i, c) in chars.iter().enumerate() {
                    let (c_lo, c_hi) = (i as f64 / n, (i + 1) as f64 / n);
                    let overlap = (r_hi.min(c_hi) - r_lo.max(c_lo)).max(0.0);
                    if overlap * n >= 0.5 - 1e-9 {
                        let idx = ALPHABET.iter().position(|&a| a as char == *c).unwrap();
                        out[offset + r * 36 + idx] = 1.0;
                    }
                }
            }
            offset += level * 36;
        }
        out
    }

    fn random_word(rng: &mut impl Rng, len: usize) -> String {
        (0..len)
            .map(|_| ALPHABET[rng.random_range(0..ALPHABET.len())] as char)
            .collect()
    }

    #[test]
    fn dimension_is_504() {
        assert_eq!(PHOC_DIM, 504);
        assert_eq!(level_offset(2), 0);
        assert_eq!(level_offset(3), 72);
        assert_eq!(level_offset(4), 180);
        assert_eq!(level_offset(5), 324);
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize_token("The"), "the");
        assert_eq!(normalize_token("don't"), "dont");
        assert_eq!(normalize_token("1832."), "1832");
        assert_eq!(normalize_token("Über"), "ber");
        assert_eq!(normalize_token("?!"), "");
    }

    #[test]
    fn empty_word_is_zero() {
        let v = phoc_encode("").unwrap();
        assert!(v.as_slice().iter().all(|&x| x == 0.0));
        assert_eq!(v, PhocVector::zeros());
    }

    #[test]
    fn two_letter_word_level_two() {
        let v = phoc_encode("ab").unwrap();
        let level2 = &v.as_slice()[..72];
        let set: Vec<usize> = (0..72).filter(|&i| level2[i] == 1.0).collect();
        // region 0 'a' -> 0, region 1 'b' -> 36 + 1
        assert_eq!(set, vec![0, 37]);
    }

    #[test]
    fn single_char_sets_both_halves_on_tie() {
        // "a" spans [0,1]; at level 2 each region holds exactly half of it.
        let v = phoc_encode("a").unwrap();
        assert_eq!(v.as_slice()[0], 1.0);
        assert_eq!(v.as_slice()[36], 1.0);
    }

    #[test]
    fn rejects_unnormalized() {
        assert!(matches!(phoc_encode("Cat"), Err(Error::InvalidToken { .. })));
        assert!(phoc_encode("it's").is_err());
    }

    #[test]
    fn matches_oracle_on_random_words() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let len = rng.random_range(1..=12);
            let w = random_word(&mut rng, len);
            assert_eq!(phoc_encode(&w).unwrap().as_slice(), oracle(&w).as_slice(), "{w}");
        }
    }

    #[test]
    fn cosine_examples() {
        let a = phoc_encode("cat").unwrap();
        let b = phoc_encode("cart").unwrap();
        assert_eq!(phoc_cosine(&a, &a), 1.0);

        let dot: f64 = a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| x * y).sum();
        let na = a.as_slice().iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb = b.as_slice().iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((phoc_cosine(&a, &b) - dot / (na * nb)).abs() < 1e-12);

        let mut x = vec![0.0; PHOC_DIM];
        let mut y = vec![0.0; PHOC_DIM];
        x[0] = 1.0;
        y[1] = 1.0;
        let (x, y) = (
            PhocVector::from_values(x).unwrap(),
            PhocVector::from_values(y).unwrap(),
        );
        assert_eq!(phoc_cosine(&x, &y), 0.0);
        assert_eq!(phoc_cosine(&x, &PhocVector::zeros()), 0.0);
    }

    #[test]
    fn from_values_validates() {
        assert!(PhocVector::from_values(vec![0.0; 10]).is_err());
        let mut v = vec![0.0; PHOC_DIM];
        v[3] = 1.5;
        assert!(PhocVector::from_values(v).is_err());
    }

    fn word_strategy() -> impl Strategy<Value = String> {
        "[a-z0-9]{1,12}"
    }

    proptest! {
        #[test]
        fn every_char_hits_level_when_long_enough(w in word_strategy()) {
            let v = phoc_encode(&w).unwrap();
            let n = w.len();
            for &level in LEVELS.iter().filter(|&&l| n >= l) {
                let off = level_offset(level);
                for c in w.chars() {
                    let ci = char_index(c).unwrap();
                    let hit = (0..level).any(|r| v.as_slice()[off + r * 36 + ci] == 1.0);
                    prop_assert!(hit, "{} level {} char {}", w, level, c);
                }
            }
        }

        #[test]
        fn cosine_symmetric_and_bounded(a in word_strategy(), b in word_strategy()) {
            let (va, vb) = (phoc_encode(&a).unwrap(), phoc_encode(&b).unwrap());
            let ab = phoc_cosine(&va, &vb);
            prop_assert_eq!(ab, phoc_cosine(&vb, &va));
            prop_assert!((0.0..=1.0).contains(&ab));
            prop_assert_eq!(phoc_cosine(&va, &va), 1.0);
        }

        #[test]
        fn cosine_scale_invariant(a in word_strategy(), b in word_strategy(), s in 0.05f64..1.0) {
            let (va, vb) = (phoc_encode(&a).unwrap(), phoc_encode(&b).unwrap());
            let scaled = PhocVector::from_values(vb.as_slice().iter().map(|x| x * s).collect()).unwrap();
            prop_assert!((phoc_cosine(&va, &vb) - phoc_cosine(&va, &scaled)).abs() < 1e-12);
        }
    }
}
