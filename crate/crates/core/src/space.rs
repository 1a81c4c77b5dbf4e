//! State spaces: `k` labeled decks holding `n` distinct cards between them, and
//! the two-deck line representation where a star marker separates the decks.
//!
//! A configuration is stored bottom-to-top per deck. Its canonical word form
//! concatenates the decks in label order with a 0 separator between adjacent
//! decks; enumeration and ranking order is lexicographic on that word, with the
//! separator sorting below every card label.

use crate::error::{Error, Result};
use num_bigint::BigUint;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::seq::SliceRandom;
use rand::Rng;

/// Card labels are 1..=n; 0 is reserved for the deck separator / star marker.
pub type Card = u16;

pub const SEPARATOR: Card = 0;

/// `k` ordered decks over cards 1..=n, each card in exactly one deck.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Configuration {
    decks: Vec<Vec<Card>>,
}

impl Configuration {
    pub fn new(decks: Vec<Vec<Card>>) -> Result<Self> {
        let k = decks.len();
        if k < 2 {
            return Err(Error::InvalidParameter(format!(
                "need at least 2 decks, got {k}"
            )));
        }
        let n: usize = decks.iter().map(|d| d.len()).sum();
        let mut seen = vec![false; n + 1];
        for deck in &decks {
            for &c in deck {
                let c = c as usize;
                if c == 0 || c > n || seen[c] {
                    return Err(Error::InvalidParameter(format!(
                        "decks must hold cards 1..={n} exactly once (bad card {c})"
                    )));
                }
                seen[c] = true;
            }
        }
        Ok(Self { decks })
    }

    /// All cards in deck 1, ascending from the bottom; the other decks empty.
    pub fn stacked(n: usize, k: usize) -> Self {
        let mut decks = vec![Vec::new(); k];
        decks[0] = (1..=n as Card).collect();
        Self { decks }
    }

    pub fn k(&self) -> usize {
        self.decks.len()
    }

    pub fn n(&self) -> usize {
        self.decks.iter().map(|d| d.len()).sum()
    }

    /// Total selectable positions: one extra slot per deck plus one per card.
    pub fn positions(&self) -> usize {
        self.n() + self.k()
    }

    pub fn decks(&self) -> &[Vec<Card>] {
        &self.decks
    }

    pub fn deck(&self, d: usize) -> &[Card] {
        &self.decks[d]
    }

    pub(crate) fn decks_mut(&mut self) -> &mut Vec<Vec<Card>> {
        &mut self.decks
    }

    pub fn deck_sizes(&self) -> Vec<usize> {
        self.decks.iter().map(|d| d.len()).collect()
    }

    pub fn to_word(&self) -> Vec<Card> {
        let mut word = Vec::with_capacity(self.n() + self.k() - 1);
        for (d, deck) in self.decks.iter().enumerate() {
            if d > 0 {
                word.push(SEPARATOR);
            }
            word.extend_from_slice(deck);
        }
        word
    }

    pub fn from_word(word: &[Card]) -> Result<Self> {
        let mut decks = vec![Vec::new()];
        for &s in word {
            if s == SEPARATOR {
                decks.push(Vec::new());
            } else {
                decks.last_mut().unwrap().push(s);
            }
        }
        Self::new(decks)
    }

    /// Line form of a two-deck configuration: deck 1 bottom-to-top, the star,
    /// then deck 2 bottom-to-top.
    pub fn to_line(&self) -> Result<Line> {
        if self.k() != 2 {
            return Err(Error::SpaceMismatch(format!(
                "line form needs exactly 2 decks, got {}",
                self.k()
            )));
        }
        Line::new(self.to_word())
    }

    pub fn from_line(line: &Line) -> Self {
        Self::from_word(line.symbols()).expect("a valid line is a valid 2-deck word")
    }
}

/// Two-deck state as a word of length n+1: cards 1..=n plus one star (0).
/// Position x holds the star; positions left of it are deck 1 bottom-to-top,
/// positions right of it are deck 2 bottom-to-top.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Line {
    syms: Vec<Card>,
}

impl Line {
    pub fn new(syms: Vec<Card>) -> Result<Self> {
        let n = syms.len() - 1;
        let mut stars = 0usize;
        let mut seen = vec![false; n + 1];
        for &s in &syms {
            if s == SEPARATOR {
                stars += 1;
            } else if (s as usize) > n || seen[s as usize] {
                return Err(Error::InvalidParameter(format!(
                    "line must hold cards 1..={n} exactly once (bad card {s})"
                )));
            } else {
                seen[s as usize] = true;
            }
        }
        if stars != 1 {
            return Err(Error::InvalidParameter(format!(
                "line must hold exactly one star, got {stars}"
            )));
        }
        Ok(Self { syms })
    }

    /// All cards in deck 1 (star at the far right).
    pub fn stacked(n: usize) -> Self {
        let mut syms: Vec<Card> = (1..=n as Card).collect();
        syms.push(SEPARATOR);
        Self { syms }
    }

    pub fn n(&self) -> usize {
        self.syms.len() - 1
    }

    /// Star position, 1-based.
    pub fn star(&self) -> usize {
        self.syms.iter().position(|&s| s == SEPARATOR).unwrap() + 1
    }

    pub fn symbols(&self) -> &[Card] {
        &self.syms
    }

    /// Symbol at 1-based position.
    pub fn get(&self, pos: usize) -> Card {
        self.syms[pos - 1]
    }

    pub(crate) fn from_symbols_unchecked(syms: Vec<Card>) -> Self {
        Self { syms }
    }
}

pub fn factorial(m: usize) -> BigUint {
    let mut acc = BigUint::one();
    for t in 2..=m {
        acc *= BigUint::from(t);
    }
    acc
}

/// Number of configurations: (n+k-1)! / (k-1)!.
pub fn state_count(n: usize, k: usize) -> BigUint {
    let mut acc = BigUint::one();
    for t in k..n + k {
        acc *= BigUint::from(t);
    }
    acc
}

pub fn state_count_u64(n: usize, k: usize) -> Option<u64> {
    let mut acc: u64 = 1;
    for t in k..n + k {
        acc = acc.checked_mul(t as u64)?;
    }
    Some(acc)
}

/// Number of line states: (n+1)!.
pub fn line_count_u64(n: usize) -> Option<u64> {
    state_count_u64(n, 2)
}

/// hi!/lo! as a u128, None on overflow.
fn falling_product(hi: usize, lo: usize) -> Option<u128> {
    let mut acc: u128 = 1;
    for t in lo + 1..=hi {
        acc = acc.checked_mul(t as u128)?;
    }
    Some(acc)
}

fn falling_product_big(hi: usize, lo: usize) -> BigUint {
    let mut acc = BigUint::one();
    for t in lo + 1..=hi {
        acc *= BigUint::from(t);
    }
    acc
}

fn rank_word_u128(word: &[Card], k: usize) -> Option<u128> {
    let l = word.len();
    let n = l + 1 - k;
    let mut card_avail = vec![true; n + 1];
    let mut seps_left = k - 1;
    let mut r: u128 = 0;
    for (p, &c) in word.iter().enumerate() {
        let rem = l - p - 1;
        if c != SEPARATOR && seps_left > 0 {
            r = r.checked_add(falling_product(rem, seps_left - 1)?)?;
        }
        if c != SEPARATOR {
            let block = falling_product(rem, seps_left)?;
            let smaller = (1..c).filter(|&s| card_avail[s as usize]).count() as u128;
            r = r.checked_add(block.checked_mul(smaller)?)?;
            card_avail[c as usize] = false;
        } else {
            seps_left -= 1;
        }
    }
    Some(r)
}

fn rank_word_big(word: &[Card], k: usize) -> BigUint {
    let l = word.len();
    let n = l + 1 - k;
    let mut card_avail = vec![true; n + 1];
    let mut seps_left = k - 1;
    let mut r = BigUint::zero();
    for (p, &c) in word.iter().enumerate() {
        let rem = l - p - 1;
        if c != SEPARATOR && seps_left > 0 {
            r += falling_product_big(rem, seps_left - 1);
        }
        if c != SEPARATOR {
            let block = falling_product_big(rem, seps_left);
            let smaller = (1..c).filter(|&s| card_avail[s as usize]).count();
            r += block * BigUint::from(smaller);
            card_avail[c as usize] = false;
        } else {
            seps_left -= 1;
        }
    }
    r
}

/// Lexicographic rank of a configuration among all of its (n, k) space.
pub fn rank(cfg: &Configuration) -> BigUint {
    let word = cfg.to_word();
    match rank_word_u128(&word, cfg.k()) {
        Some(r) => BigUint::from(r),
        None => rank_word_big(&word, cfg.k()),
    }
}

/// Fast-path rank for enumerable spaces.
pub fn rank_u64(cfg: &Configuration) -> Option<u64> {
    let word = cfg.to_word();
    rank_word_u128(&word, cfg.k()).and_then(|r| u64::try_from(r).ok())
}

pub fn line_rank_u64(line: &Line) -> Option<u64> {
    rank_word_u128(line.symbols(), 2).and_then(|r| u64::try_from(r).ok())
}

fn unrank_word_u128(n: usize, k: usize, mut idx: u128) -> Option<Vec<Card>> {
    let l = n + k - 1;
    let mut word = Vec::with_capacity(l);
    let mut cards: Vec<Card> = (1..=n as Card).collect();
    let mut seps_left = k - 1;
    for p in 0..l {
        let rem = l - p - 1;
        if seps_left > 0 {
            let block = falling_product(rem, seps_left - 1)?;
            if idx < block {
                word.push(SEPARATOR);
                seps_left -= 1;
                continue;
            }
            idx -= block;
        }
        let block = falling_product(rem, seps_left)?;
        let skip = (idx / block) as usize;
        if skip >= cards.len() {
            return None;
        }
        idx %= block;
        word.push(cards.remove(skip));
    }
    if idx == 0 {
        Some(word)
    } else {
        None
    }
}

/// Inverse of `rank`.
pub fn unrank(n: usize, k: usize, index: &BigUint) -> Result<Configuration> {
    if *index >= state_count(n, k) {
        return Err(Error::InvalidParameter(format!(
            "rank {index} out of range for ({n},{k})"
        )));
    }
    if let Some(idx) = index.to_u128() {
        if let Some(word) = unrank_word_u128(n, k, idx) {
            return Configuration::from_word(&word);
        }
    }
    // Big path: same greedy scan with arbitrary precision.
    let l = n + k - 1;
    let mut idx = index.clone();
    let mut word = Vec::with_capacity(l);
    let mut cards: Vec<Card> = (1..=n as Card).collect();
    let mut seps_left = k - 1;
    for p in 0..l {
        let rem = l - p - 1;
        if seps_left > 0 {
            let block = falling_product_big(rem, seps_left - 1);
            if idx < block {
                word.push(SEPARATOR);
                seps_left -= 1;
                continue;
            }
            idx -= block;
        }
        let block = falling_product_big(rem, seps_left);
        let skip = (idx.clone() / &block).to_usize().unwrap();
        idx %= block;
        word.push(cards.remove(skip));
    }
    Configuration::from_word(&word)
}

pub fn unrank_u64(n: usize, k: usize, index: u64) -> Result<Configuration> {
    match unrank_word_u128(n, k, index as u128) {
        Some(word) => Configuration::from_word(&word),
        None => Err(Error::InvalidParameter(format!(
            "rank {index} out of range for ({n},{k})"
        ))),
    }
}

pub fn line_unrank_u64(n: usize, index: u64) -> Result<Line> {
    let word = unrank_word_u128(n, 2, index as u128).ok_or_else(|| {
        Error::InvalidParameter(format!("rank {index} out of range for line space n={n}"))
    })?;
    Line::new(word)
}

/// Next word in lexicographic multiset-permutation order; false at the last one.
fn next_word(word: &mut [Card]) -> bool {
    let l = word.len();
    if l < 2 {
        return false;
    }
    let mut i = l - 1;
    while i > 0 && word[i - 1] >= word[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = l - 1;
    while word[j] <= word[i - 1] {
        j -= 1;
    }
    word.swap(i - 1, j);
    word[i..].reverse();
    true
}

/// All configurations in rank order. Intended for enumerable spaces only.
pub fn enumerate(n: usize, k: usize) -> Vec<Configuration> {
    let count = state_count_u64(n, k).expect("enumerable space") as usize;
    let mut word: Vec<Card> = vec![SEPARATOR; k - 1];
    word.extend(1..=n as Card);
    word.sort_unstable();
    let mut out = Vec::with_capacity(count);
    loop {
        out.push(Configuration::from_word(&word).unwrap());
        if !next_word(&mut word) {
            break;
        }
    }
    out
}

/// All line states in rank order.
pub fn enumerate_lines(n: usize) -> Vec<Line> {
    enumerate(n, 2)
        .into_iter()
        .map(|c| c.to_line().unwrap())
        .collect()
}

/// Exactly uniform sample: shuffle the separator word. Identical separators
/// collapse the (k-1)! orderings per word uniformly, so words are uniform.
pub fn sample_uniform<R: Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> Configuration {
    let mut word: Vec<Card> = vec![SEPARATOR; k - 1];
    word.extend(1..=n as Card);
    word.shuffle(rng);
    Configuration::from_word(&word).unwrap()
}

/// Balanced-window parameters: a star position x is delta-balanced when
/// delta*(n+1) <= x <= (1-delta)*(n+1). Comparisons are exact: the f64 delta
/// is converted to its dyadic rational value.
#[derive(Clone, Debug)]
pub struct BalanceParams {
    delta: f64,
    exact: BigRational,
}

impl BalanceParams {
    pub fn new(delta: f64) -> Result<Self> {
        if !(delta >= 0.0 && delta < 0.5) {
            return Err(Error::InvalidParameter(format!(
                "delta must lie in [0, 0.5), got {delta}"
            )));
        }
        let exact = BigRational::from_float(delta)
            .ok_or_else(|| Error::InvalidParameter(format!("delta {delta} is not finite")))?;
        Ok(Self { delta, exact })
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn is_balanced(&self, x: usize, n: usize) -> bool {
        let x = BigRational::from_integer(x.into());
        let np1 = BigRational::from_integer((n + 1).into());
        let lo = &self.exact * &np1;
        let hi = (BigRational::one() - &self.exact) * &np1;
        lo <= x && x <= hi
    }

    pub fn balanced_count(&self, n: usize) -> usize {
        (1..=n + 1).filter(|&x| self.is_balanced(x, n)).count()
    }

    /// Probability that a uniform star position is balanced, as an exact ratio.
    pub fn p_exact(&self, n: usize) -> BigRational {
        BigRational::new(self.balanced_count(n).into(), (n + 1).into())
    }

    pub fn p(&self, n: usize) -> f64 {
        self.balanced_count(n) as f64 / (n + 1) as f64
    }

    /// Lower bound 1 - sqrt(1 - p) on the balanced-swap generator gap.
    pub fn gap_lower_bound(&self, n: usize) -> f64 {
        1.0 - (1.0 - self.p(n)).sqrt()
    }

    /// gamma = 1/(1 - sqrt(1 - p)); infinite when the window holds no integer.
    pub fn gamma(&self, n: usize) -> f64 {
        let b = self.gap_lower_bound(n);
        if b <= 0.0 {
            f64::INFINITY
        } else {
            1.0 / b
        }
    }

    /// Finite-n constant comparing the balanced form against the modified
    /// transposition form (the form bound multiplies this by n).
    pub fn comparison_constant(&self, n: usize) -> f64 {
        let d = self.delta;
        if d == 0.0 {
            return f64::INFINITY;
        }
        let n_f = n as f64;
        let np1 = (n + 1) as f64;
        let np2 = (n + 2) as f64;
        (2.0 + 9.0 * n_f * n_f / (d * (1.0 - d) * np1 * np1)) * np2 * np2 / (n_f * n_f)
    }
}

pub fn deck1_size(cfg: &Configuration) -> usize {
    cfg.deck(0).len()
}

pub fn is_first_deck_empty(cfg: &Configuration) -> bool {
    cfg.deck(0).is_empty()
}

/// Signed helper: exact rational to nearest f64, for report output.
pub fn rational_to_f64(r: &BigRational) -> f64 {
    let num = r.numer();
    let den = r.denom();
    let sign = if r.is_negative() { -1.0 } else { 1.0 };
    let num = num.magnitude().to_f64().unwrap_or(f64::INFINITY);
    let den = den.magnitude().to_f64().unwrap_or(f64::INFINITY);
    sign * num / den
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn counts_match_enumeration() {
        for n in 0..6 {
            for k in 2..5 {
                let count = state_count_u64(n, k).unwrap() as usize;
                assert_eq!(enumerate(n, k).len(), count, "({n},{k})");
            }
        }
        assert_eq!(state_count_u64(3, 3), Some(60));
        assert_eq!(state_count_u64(5, 2), Some(720));
    }

    #[test]
    fn rank_is_position_in_enumeration() {
        for (n, k) in [(3, 2), (4, 2), (3, 3), (2, 4), (4, 3)] {
            for (i, cfg) in enumerate(n, k).iter().enumerate() {
                assert_eq!(rank_u64(cfg), Some(i as u64));
                assert_eq!(rank(cfg), BigUint::from(i));
                assert_eq!(&unrank_u64(n, k, i as u64).unwrap(), cfg);
                assert_eq!(&unrank(n, k, &BigUint::from(i)).unwrap(), cfg);
            }
        }
    }

    #[test]
    fn big_space_rank_roundtrip() {
        // Space too large for u64 state counts.
        let n = 40;
        let k = 10;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let cfg = sample_uniform(n, k, &mut rng);
            let r = rank(&cfg);
            assert!(r < state_count(n, k));
            assert_eq!(unrank(n, k, &r).unwrap(), cfg);
        }
    }

    #[test]
    fn long_word_rank_roundtrip() {
        // Word long enough that raw factorials overflow u128, count still small.
        let n = 2;
        let k = 40;
        let count = state_count_u64(n, k).unwrap();
        assert_eq!(count, 40 * 41);
        for i in 0..count {
            let cfg = unrank_u64(n, k, i).unwrap();
            assert_eq!(rank_u64(&cfg), Some(i));
        }
    }

    #[test]
    fn line_round_trip() {
        for n in 0..5 {
            for cfg in enumerate(n, 2) {
                let line = cfg.to_line().unwrap();
                assert_eq!(Configuration::from_line(&line), cfg);
            }
        }
    }

    #[test]
    fn line_rank_matches_two_deck_rank() {
        for n in 0..5 {
            for cfg in enumerate(n, 2) {
                let line = cfg.to_line().unwrap();
                assert_eq!(line_rank_u64(&line), rank_u64(&cfg));
            }
        }
    }

    #[test]
    fn star_position_uniform_by_class_size() {
        let n = 4;
        let lines = enumerate_lines(n);
        for x in 1..=n + 1 {
            let count = lines.iter().filter(|l| l.star() == x).count();
            assert_eq!(count, 24); // n! states per star position
        }
    }

    #[test]
    fn sample_uniform_hits_every_state() {
        let n = 3;
        let k = 2;
        let count = state_count_u64(n, k).unwrap() as usize;
        let mut seen = vec![0u32; count];
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..6000 {
            let cfg = sample_uniform(n, k, &mut rng);
            seen[rank_u64(&cfg).unwrap() as usize] += 1;
        }
        // 6000 draws over 24 states: each expected 250 times.
        for (i, &c) in seen.iter().enumerate() {
            assert!(c > 150, "state {i} drawn only {c} times");
        }
    }

    #[test]
    fn balance_window_exact_counts() {
        let p = BalanceParams::new(0.25).unwrap();
        let expect = [(1, 1, 2), (2, 2, 3), (3, 3, 4), (4, 2, 5), (5, 3, 6), (6, 4, 7)];
        for (n, num, den) in expect {
            let got = p.p_exact(n);
            assert_eq!(got, BigRational::new(num.into(), den.into()), "n={n}");
        }
    }

    #[test]
    fn balance_window_degenerate_and_zero() {
        let z = BalanceParams::new(0.0).unwrap();
        for n in 1..8 {
            assert_eq!(z.balanced_count(n), n + 1);
            assert_eq!(z.p(n), 1.0);
            assert_eq!(z.gap_lower_bound(n), 1.0);
        }
        // Window [1.47, 1.53] holds no integer.
        let tight = BalanceParams::new(0.49).unwrap();
        assert_eq!(tight.balanced_count(2), 0);
        assert!(tight.gamma(2).is_infinite());
        assert!(BalanceParams::new(0.5).is_err());
        assert!(BalanceParams::new(-0.1).is_err());
    }

    #[test]
    fn comparison_constant_values() {
        let p = BalanceParams::new(0.25).unwrap();
        let expect = [126.0, 93.33333333333333, 80.55555555555556, 73.62];
        for (n, e) in (1..=4).zip(expect) {
            assert!((p.comparison_constant(n) - e).abs() < 1e-9, "n={n}");
        }
    }

    #[test]
    fn invalid_states_rejected() {
        assert!(Configuration::new(vec![vec![1, 1], vec![]]).is_err());
        assert!(Configuration::new(vec![vec![1, 3], vec![]]).is_err());
        assert!(Configuration::new(vec![vec![1, 2]]).is_err());
        assert!(Line::new(vec![1, 2, 3]).is_err());
        assert!(Line::new(vec![0, 0, 1]).is_err());
    }
}
