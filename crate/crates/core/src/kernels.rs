//! Move operators and one-step transition laws for every chain.
//!
//! Line operators take 1-based positions i, j in 1..=n+1 and are symmetric in
//! their indices. Deck operators take 1-based positions r, s in 1..=n+k under
//! the deck-slot mapping: positions scan decks in label order; within a deck,
//! slot 1 is the extra slot (a cut above the top card) and slot t >= 2 selects
//! the card at height t-1 from the bottom, the movable top being that card and
//! everything above it.

use crate::error::{Error, Result};
use crate::space::{BalanceParams, Card, Configuration, Line, SEPARATOR};
use rand::seq::SliceRandom;
use rand::Rng;
use std::collections::BTreeMap;

/// Chain identifiers. Each fixes the state space (decks vs line) and the time
/// type (discrete step vs continuous-time generator).
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum KernelId {
    /// k-deck top-swap: pick two positions, exchange the deck tops.
    TopSwap,
    /// Two-deck top-swap in line representation.
    TopSwapLine,
    /// Transposition that degenerates to a top-swap at the star.
    ModifiedTransposition,
    /// Transposition allowed only when the pair straddles the star (line).
    ConstrainedTranspositionLine,
    /// k-deck analogue: card-card swaps across decks, top-swap at extra slots.
    ConstrainedTranspositionDecks,
    /// Unconstrained symbol transpositions on the line.
    PureTransposition,
    /// Generator: uniform star swaps plus resampling at balanced star positions.
    BalancedSwap(f64),
    /// Same generator with plain transpositions in place of star swaps.
    BalancedSwapTranspose(f64),
    /// Generator: resample the union of a uniformly chosen ordered deck pair.
    DeckAverage,
    /// Deck-average generator with pair rates proportional to the pooled size.
    DeckAverageWeighted,
    /// Top-swap with same-deck picks reversing the enclosed card interval.
    TopSwapInversion,
}

impl KernelId {
    pub fn is_line_space(&self) -> bool {
        matches!(
            self,
            KernelId::TopSwapLine
                | KernelId::ModifiedTransposition
                | KernelId::ConstrainedTranspositionLine
                | KernelId::PureTransposition
                | KernelId::BalancedSwap(_)
                | KernelId::BalancedSwapTranspose(_)
        )
    }

    pub fn is_generator(&self) -> bool {
        matches!(
            self,
            KernelId::BalancedSwap(_)
                | KernelId::BalancedSwapTranspose(_)
                | KernelId::DeckAverage
                | KernelId::DeckAverageWeighted
        )
    }

    pub fn name(&self) -> String {
        match self {
            KernelId::TopSwap => "top-swap".into(),
            KernelId::TopSwapLine => "top-swap-line".into(),
            KernelId::ModifiedTransposition => "modified-transposition".into(),
            KernelId::ConstrainedTranspositionLine => "constrained-transposition-line".into(),
            KernelId::ConstrainedTranspositionDecks => "constrained-transposition-decks".into(),
            KernelId::PureTransposition => "pure-transposition".into(),
            KernelId::BalancedSwap(d) => format!("balanced-swap(delta={d})"),
            KernelId::BalancedSwapTranspose(d) => format!("balanced-swap-transpose(delta={d})"),
            KernelId::DeckAverage => "deck-average".into(),
            KernelId::DeckAverageWeighted => "deck-average-weighted".into(),
            KernelId::TopSwapInversion => "top-swap-inversion".into(),
        }
    }
}

fn check_line_index(line: &Line, what: &'static str, v: usize, hi: usize) -> Result<()> {
    if v < 1 || v > hi {
        return Err(Error::IndexOutOfRange {
            what,
            got: v,
            lo: 1,
            hi,
        });
    }
    let _ = line;
    Ok(())
}

/// Top-swap on the line. With i <= j and x the star position: nothing happens
/// unless i <= x <= j; otherwise the tops above (and including) the chosen
/// cards are exchanged across the star. The new star lands at n+i-j+2 when
/// j > x, or at i when j = x.
pub fn top_swap_line(line: &Line, i: usize, j: usize) -> Result<Line> {
    let n = line.n();
    check_line_index(line, "line position", i, n + 1)?;
    check_line_index(line, "line position", j, n + 1)?;
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    let x = line.star();
    if i == j || j < x || x < i {
        return Ok(line.clone());
    }
    let l = line.symbols();
    let mut res: Vec<Card> = Vec::with_capacity(n + 1);
    if i < x && x < j {
        res.extend_from_slice(&l[..i - 1]);
        res.extend_from_slice(&l[j - 1..]);
        res.push(SEPARATOR);
        res.extend_from_slice(&l[x..j - 1]);
        res.extend_from_slice(&l[i - 1..x - 1]);
    } else if i == x {
        res.extend_from_slice(&l[..x - 1]);
        res.extend_from_slice(&l[j - 1..]);
        res.push(SEPARATOR);
        res.extend_from_slice(&l[x..j - 1]);
    } else {
        // j == x: deck-1 top above (and including) i moves onto deck 2.
        res.extend_from_slice(&l[..i - 1]);
        res.push(SEPARATOR);
        res.extend_from_slice(&l[x..]);
        res.extend_from_slice(&l[i - 1..x - 1]);
    }
    debug_assert_eq!(res.len(), n + 1);
    Ok(Line::from_symbols_unchecked(res))
}

/// Extended-index convention: second index n+2 addresses the extra slot above
/// deck 2, which acts like a top-swap with the star itself. Requires i at or
/// left of the star; at i = x the move is the identity.
pub fn top_swap_line_extended(line: &Line, i: usize, j: usize) -> Result<Line> {
    let n = line.n();
    if j == n + 2 {
        check_line_index(line, "line position", i, n + 1)?;
        let x = line.star();
        if i > x {
            return Err(Error::InvalidParameter(format!(
                "extended top swap needs i <= star position (i={i}, star={x})"
            )));
        }
        if i == x {
            return Ok(line.clone());
        }
        return top_swap_line(line, i, x);
    }
    top_swap_line(line, i, j)
}

/// Plain symbol transposition; moving the star changes the deck sizes.
pub fn transpose_line(line: &Line, i: usize, j: usize) -> Result<Line> {
    let n = line.n();
    check_line_index(line, "line position", i, n + 1)?;
    check_line_index(line, "line position", j, n + 1)?;
    let mut syms = line.symbols().to_vec();
    syms.swap(i - 1, j - 1);
    Ok(Line::from_symbols_unchecked(syms))
}

/// Transposition when the pair strictly straddles the star, top-swap when one
/// index sits on the star, identity otherwise.
pub fn modified_transposition_line(line: &Line, i: usize, j: usize) -> Result<Line> {
    let n = line.n();
    check_line_index(line, "line position", i, n + 1)?;
    check_line_index(line, "line position", j, n + 1)?;
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    let x = line.star();
    if i == j || j < x || x < i {
        return Ok(line.clone());
    }
    if i < x && x < j {
        transpose_line(line, i, j)
    } else {
        top_swap_line(line, i, j)
    }
}

/// Transposition whenever the pair encloses the star (inclusive), identity
/// otherwise. An index on the star transposes the star itself.
pub fn constrained_transposition_line(line: &Line, i: usize, j: usize) -> Result<Line> {
    let n = line.n();
    check_line_index(line, "line position", i, n + 1)?;
    check_line_index(line, "line position", j, n + 1)?;
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    let x = line.star();
    if i == j || j < x || x < i {
        return Ok(line.clone());
    }
    transpose_line(line, i, j)
}

/// Map a global position 1..=n+k to (deck index, slot within deck).
pub fn pos_to_deck_slot(cfg: &Configuration, pos: usize) -> Result<(usize, usize)> {
    let mut p = pos;
    if p >= 1 {
        for (d, deck) in cfg.decks().iter().enumerate() {
            let m = deck.len() + 1;
            if p <= m {
                return Ok((d, p));
            }
            p -= m;
        }
    }
    Err(Error::IndexOutOfRange {
        what: "deck position",
        got: pos,
        lo: 1,
        hi: cfg.positions(),
    })
}

fn split_top(deck: &mut Vec<Card>, slot: usize) -> Vec<Card> {
    if slot == 1 {
        Vec::new()
    } else {
        deck.split_off(slot - 2)
    }
}

/// k-deck top-swap: exchange the tops selected by the two positions. Same-deck
/// picks do nothing; an extra slot contributes an empty top.
pub fn top_swap(cfg: &Configuration, r: usize, s: usize) -> Result<Configuration> {
    let (dr, sr) = pos_to_deck_slot(cfg, r)?;
    let (ds, ss) = pos_to_deck_slot(cfg, s)?;
    if dr == ds {
        return Ok(cfg.clone());
    }
    let mut out = cfg.clone();
    let decks = out.decks_mut();
    let top_r = split_top(&mut decks[dr], sr);
    let top_s = split_top(&mut decks[ds], ss);
    decks[dr].extend(top_s);
    decks[ds].extend(top_r);
    Ok(out)
}

/// Top-swap across decks; within one deck, reverse the inclusive card interval
/// between the selected slots (extra slot: from the selected card to the top).
pub fn inversion_move(cfg: &Configuration, r: usize, s: usize) -> Result<Configuration> {
    let (dr, sr) = pos_to_deck_slot(cfg, r)?;
    let (ds, ss) = pos_to_deck_slot(cfg, s)?;
    if dr != ds {
        return top_swap(cfg, r, s);
    }
    if sr == ss {
        return Ok(cfg.clone());
    }
    let (lo, hi) = if sr < ss { (sr, ss) } else { (ss, sr) };
    let mut out = cfg.clone();
    let deck = &mut out.decks_mut()[dr];
    let (a, b) = if lo == 1 {
        (hi - 2, deck.len() - 1)
    } else {
        (lo - 2, hi - 2)
    };
    deck[a..=b].reverse();
    Ok(out)
}

/// Across decks: swap the two selected cards in place; if one position is an
/// extra slot, fall back to the corresponding top-swap (the only reversible
/// reading). Same-deck picks and two extra slots do nothing.
pub fn constrained_transposition_decks(cfg: &Configuration, r: usize, s: usize) -> Result<Configuration> {
    let (dr, sr) = pos_to_deck_slot(cfg, r)?;
    let (ds, ss) = pos_to_deck_slot(cfg, s)?;
    if dr == ds {
        return Ok(cfg.clone());
    }
    if sr >= 2 && ss >= 2 {
        let mut out = cfg.clone();
        let decks = out.decks_mut();
        let a = decks[dr][sr - 2];
        let b = decks[ds][ss - 2];
        decks[dr][sr - 2] = b;
        decks[ds][ss - 2] = a;
        return Ok(out);
    }
    if sr == 1 && ss == 1 {
        return Ok(cfg.clone());
    }
    top_swap(cfg, r, s)
}

/// Replace decks i and j by a uniform arrangement of their pooled cards over
/// the two ordered decks ((m+1)! outcomes for a pool of size m).
pub fn deck_average_resample<R: Rng + ?Sized>(
    cfg: &Configuration,
    i: usize,
    j: usize,
    rng: &mut R,
) -> Result<Configuration> {
    let k = cfg.k();
    if i == j || i >= k || j >= k {
        return Err(Error::InvalidParameter(format!(
            "deck pair ({i},{j}) invalid for k={k}"
        )));
    }
    let mut word: Vec<Card> = Vec::with_capacity(cfg.deck(i).len() + cfg.deck(j).len() + 1);
    word.extend_from_slice(cfg.deck(i));
    word.extend_from_slice(cfg.deck(j));
    word.push(SEPARATOR);
    word.shuffle(rng);
    let cut = word.iter().position(|&c| c == SEPARATOR).unwrap();
    let mut out = cfg.clone();
    let decks = out.decks_mut();
    decks[i] = word[..cut].to_vec();
    decks[j] = word[cut + 1..].to_vec();
    Ok(out)
}

/// Discrete step or generator row, by state.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TimeKind {
    Discrete,
    Generator,
}

#[derive(Clone, Debug, PartialEq)]
pub enum ChainState {
    Decks(Configuration),
    Line(Line),
}

/// One exact row of the transition law from a given state. Discrete entries
/// are probabilities summing to 1 (holding mass included); generator entries
/// are jump rates with a diagonal entry making the row sum zero.
#[derive(Clone, Debug)]
pub struct TransitionDistribution {
    pub kind: TimeKind,
    pub entries: Vec<(ChainState, f64)>,
}

fn line_op(kernel: KernelId, line: &Line, i: usize, j: usize) -> Result<Line> {
    match kernel {
        KernelId::TopSwapLine => top_swap_line(line, i, j),
        KernelId::ModifiedTransposition => modified_transposition_line(line, i, j),
        KernelId::ConstrainedTranspositionLine => constrained_transposition_line(line, i, j),
        KernelId::PureTransposition => transpose_line(line, i, j),
        _ => unreachable!("not a discrete line kernel"),
    }
}

fn deck_op(kernel: KernelId, cfg: &Configuration, r: usize, s: usize) -> Result<Configuration> {
    match kernel {
        KernelId::TopSwap => top_swap(cfg, r, s),
        KernelId::ConstrainedTranspositionDecks => constrained_transposition_decks(cfg, r, s),
        KernelId::TopSwapInversion => inversion_move(cfg, r, s),
        _ => unreachable!("not a discrete deck kernel"),
    }
}

/// All distinct permutations of the card multiset around a fixed star position.
fn star_class(line: &Line) -> Vec<Line> {
    let x = line.star();
    let mut cards: Vec<Card> = line
        .symbols()
        .iter()
        .copied()
        .filter(|&c| c != SEPARATOR)
        .collect();
    cards.sort_unstable();
    let mut out = Vec::new();
    loop {
        let mut syms = cards.clone();
        syms.insert(x - 1, SEPARATOR);
        out.push(Line::from_symbols_unchecked(syms));
        if !next_perm(&mut cards) {
            break;
        }
    }
    out
}

fn next_perm(word: &mut [Card]) -> bool {
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

/// All (m+1)! joint arrangements of the pooled cards of decks i and j.
pub(crate) fn pool_arrangements(cfg: &Configuration, i: usize, j: usize) -> Vec<Configuration> {
    let mut word: Vec<Card> = Vec::with_capacity(cfg.deck(i).len() + cfg.deck(j).len() + 1);
    word.extend_from_slice(cfg.deck(i));
    word.extend_from_slice(cfg.deck(j));
    word.push(SEPARATOR);
    word.sort_unstable();
    let mut out = Vec::new();
    loop {
        let cut = word.iter().position(|&c| c == SEPARATOR).unwrap();
        let mut cfg2 = cfg.clone();
        let decks = cfg2.decks_mut();
        decks[i] = word[..cut].to_vec();
        decks[j] = word[cut + 1..].to_vec();
        out.push(cfg2);
        if !next_perm(&mut word) {
            break;
        }
    }
    out
}

pub fn transition_distribution(kernel: KernelId, state: &ChainState) -> Result<TransitionDistribution> {
    match (kernel.is_line_space(), state) {
        (true, ChainState::Line(line)) => transition_from_line(kernel, line),
        (false, ChainState::Decks(cfg)) => transition_from_decks(kernel, cfg),
        _ => Err(Error::SpaceMismatch(format!(
            "kernel {} does not act on this state type",
            kernel.name()
        ))),
    }
}

fn transition_from_line(kernel: KernelId, line: &Line) -> Result<TransitionDistribution> {
    let n = line.n();
    match kernel {
        KernelId::BalancedSwap(d) | KernelId::BalancedSwapTranspose(d) => {
            let params = BalanceParams::new(d)?;
            let use_transpose = matches!(kernel, KernelId::BalancedSwapTranspose(_));
            let mut rates: BTreeMap<Line, f64> = BTreeMap::new();
            let x = line.star();
            let w = 1.0 / (n + 1) as f64;
            for i in 1..=n + 1 {
                let target = if use_transpose {
                    transpose_line(line, i, x)?
                } else {
                    top_swap_line(line, i, x)?
                };
                *rates.entry(target).or_insert(0.0) += w;
            }
            *rates.entry(line.clone()).or_insert(0.0) -= 1.0;
            if params.is_balanced(x, n) {
                let class = star_class(line);
                let w = 1.0 / class.len() as f64;
                for member in class {
                    *rates.entry(member).or_insert(0.0) += w;
                }
                *rates.entry(line.clone()).or_insert(0.0) -= 1.0;
            }
            Ok(TransitionDistribution {
                kind: TimeKind::Generator,
                entries: rates
                    .into_iter()
                    .map(|(l, v)| (ChainState::Line(l), v))
                    .collect(),
            })
        }
        _ => {
            let mut probs: BTreeMap<Line, f64> = BTreeMap::new();
            let npos = (n + 2) as f64;
            let w = 1.0 / (npos * npos);
            for i in 1..=n + 1 {
                for j in 1..=n + 1 {
                    let target = line_op(kernel, line, i, j)?;
                    *probs.entry(target).or_insert(0.0) += w;
                }
            }
            let holding = (npos * npos - ((n + 1) * (n + 1)) as f64) * w;
            *probs.entry(line.clone()).or_insert(0.0) += holding;
            Ok(TransitionDistribution {
                kind: TimeKind::Discrete,
                entries: probs
                    .into_iter()
                    .map(|(l, v)| (ChainState::Line(l), v))
                    .collect(),
            })
        }
    }
}

fn transition_from_decks(kernel: KernelId, cfg: &Configuration) -> Result<TransitionDistribution> {
    let n = cfg.n();
    let k = cfg.k();
    match kernel {
        KernelId::DeckAverage | KernelId::DeckAverageWeighted => {
            let weighted = matches!(kernel, KernelId::DeckAverageWeighted);
            let mut rates: BTreeMap<Configuration, f64> = BTreeMap::new();
            for i in 0..k {
                for j in i + 1..k {
                    let pair_rate = if weighted {
                        (cfg.deck(i).len() + cfg.deck(j).len()) as f64 / k as f64
                    } else {
                        1.0 / k as f64
                    };
                    // Ordered pairs (i,j) and (j,i) resample identically.
                    let rate = 2.0 * pair_rate;
                    let targets = pool_arrangements(cfg, i, j);
                    let w = rate / targets.len() as f64;
                    for t in targets {
                        *rates.entry(t).or_insert(0.0) += w;
                    }
                    *rates.entry(cfg.clone()).or_insert(0.0) -= rate;
                }
            }
            Ok(TransitionDistribution {
                kind: TimeKind::Generator,
                entries: rates
                    .into_iter()
                    .map(|(c, v)| (ChainState::Decks(c), v))
                    .collect(),
            })
        }
        KernelId::TopSwap | KernelId::ConstrainedTranspositionDecks | KernelId::TopSwapInversion => {
            let npos = n + k;
            let w = 1.0 / (npos * npos) as f64;
            let mut probs: BTreeMap<Configuration, f64> = BTreeMap::new();
            for r in 1..=npos {
                for s in 1..=npos {
                    let target = deck_op(kernel, cfg, r, s)?;
                    *probs.entry(target).or_insert(0.0) += w;
                }
            }
            Ok(TransitionDistribution {
                kind: TimeKind::Discrete,
                entries: probs
                    .into_iter()
                    .map(|(c, v)| (ChainState::Decks(c), v))
                    .collect(),
            })
        }
        _ => Err(Error::SpaceMismatch(format!(
            "kernel {} does not act on deck states",
            kernel.name()
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::{enumerate, enumerate_lines};

    fn line(syms: &[Card]) -> Line {
        Line::new(syms.to_vec()).unwrap()
    }

    #[test]
    fn top_swap_line_worked_examples() {
        let eta = line(&[3, 4, 0, 5, 2, 1, 6]);
        assert_eq!(top_swap_line(&eta, 1, 5).unwrap(), line(&[2, 1, 6, 0, 5, 3, 4]));
        assert_eq!(top_swap_line(&eta, 3, 6).unwrap(), line(&[3, 4, 1, 6, 0, 5, 2]));
        assert_eq!(top_swap_line(&eta, 1, 3).unwrap(), line(&[0, 5, 2, 1, 6, 3, 4]));
        assert_eq!(top_swap_line(&eta, 2, 7).unwrap(), line(&[3, 6, 0, 5, 2, 1, 4]));
    }

    #[test]
    fn top_swap_line_identity_cases() {
        let eta = line(&[3, 4, 0, 5, 2, 1, 6]);
        assert_eq!(top_swap_line(&eta, 4, 4).unwrap(), eta);
        assert_eq!(top_swap_line(&eta, 1, 2).unwrap(), eta); // both in deck 1
        assert_eq!(top_swap_line(&eta, 4, 7).unwrap(), eta); // both in deck 2
        // Index order does not matter.
        assert_eq!(
            top_swap_line(&eta, 5, 1).unwrap(),
            top_swap_line(&eta, 1, 5).unwrap()
        );
    }

    #[test]
    fn top_swap_line_star_lands_where_stated() {
        for n in 1..=5 {
            for l in enumerate_lines(n) {
                let x = l.star();
                for i in 1..=n + 1 {
                    for j in i + 1..=n + 1 {
                        if i <= x && x <= j {
                            let t = top_swap_line(&l, i, j).unwrap();
                            let expect = if j == x { i } else { n + i - j + 2 };
                            assert_eq!(t.star(), expect);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn extended_index_matches_star_swap() {
        let xi = line(&[3, 2, 1, 6, 0, 5, 4]);
        assert_eq!(
            top_swap_line_extended(&xi, 3, 8).unwrap(),
            line(&[3, 2, 0, 5, 4, 1, 6])
        );
        for n in 1..=5 {
            for l in enumerate_lines(n) {
                let x = l.star();
                for i in 1..x {
                    assert_eq!(
                        top_swap_line_extended(&l, i, n + 2).unwrap(),
                        top_swap_line(&l, i, x).unwrap()
                    );
                }
                assert_eq!(top_swap_line_extended(&l, x, n + 2).unwrap(), l);
                if x < n + 1 {
                    assert!(top_swap_line_extended(&l, x + 1, n + 2).is_err());
                }
            }
        }
    }

    #[test]
    fn extended_index_moves_to_empty_deck() {
        // Deck 2 empty: the top of deck 1 above and including i lands there.
        let l = line(&[2, 1, 3, 0]);
        assert_eq!(top_swap_line_extended(&l, 2, 5).unwrap(), line(&[2, 0, 1, 3]));
    }

    #[test]
    fn transpose_line_examples() {
        let eta = line(&[3, 4, 0, 5, 2, 1, 6]);
        assert_eq!(transpose_line(&eta, 1, 6).unwrap(), line(&[1, 4, 0, 5, 2, 3, 6]));
        assert_eq!(transpose_line(&eta, 2, 5).unwrap(), line(&[3, 2, 0, 5, 4, 1, 6]));
        assert_eq!(transpose_line(&eta, 4, 4).unwrap(), eta);
    }

    #[test]
    fn modified_transposition_cases() {
        for n in 1..=5 {
            for l in enumerate_lines(n) {
                let x = l.star();
                for i in 1..=n + 1 {
                    for j in 1..=n + 1 {
                        let got = modified_transposition_line(&l, i, j).unwrap();
                        let (a, b) = if i <= j { (i, j) } else { (j, i) };
                        if a == b || b < x || x < a {
                            assert_eq!(got, l);
                        } else if a < x && x < b {
                            assert_eq!(got, transpose_line(&l, a, b).unwrap());
                        } else {
                            assert_eq!(got, top_swap_line(&l, a, b).unwrap());
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn constrained_transposition_line_cases() {
        for n in 1..=4 {
            for l in enumerate_lines(n) {
                let x = l.star();
                for i in 1..=n + 1 {
                    for j in i..=n + 1 {
                        let got = constrained_transposition_line(&l, i, j).unwrap();
                        if i < j && i <= x && x <= j {
                            assert_eq!(got, transpose_line(&l, i, j).unwrap());
                        } else {
                            assert_eq!(got, l);
                        }
                    }
                }
            }
        }
    }

    fn cfg(decks: &[&[Card]]) -> Configuration {
        Configuration::new(decks.iter().map(|d| d.to_vec()).collect()).unwrap()
    }

    #[test]
    fn deck_slot_mapping() {
        let c = cfg(&[&[1, 2], &[], &[3]]);
        // Deck 1 has 3 positions, deck 2 has 1, deck 3 has 2.
        assert_eq!(pos_to_deck_slot(&c, 1).unwrap(), (0, 1));
        assert_eq!(pos_to_deck_slot(&c, 3).unwrap(), (0, 3));
        assert_eq!(pos_to_deck_slot(&c, 4).unwrap(), (1, 1));
        assert_eq!(pos_to_deck_slot(&c, 5).unwrap(), (2, 1));
        assert_eq!(pos_to_deck_slot(&c, 6).unwrap(), (2, 2));
        assert!(pos_to_deck_slot(&c, 0).is_err());
        assert!(pos_to_deck_slot(&c, 7).is_err());
    }

    #[test]
    fn top_swap_moves_tops() {
        // Positions: 1..4 scan deck 1 (extra, card 1, card 2, card 3),
        // 5..7 scan deck 2 (extra, card 4, card 5).
        let c = cfg(&[&[1, 2, 3], &[4, 5]]);
        // Extra slot of deck 2 with card 2: the top (2,3) of deck 1 moves
        // onto deck 2; nothing comes back.
        let moved = top_swap(&c, 3, 5).unwrap();
        assert_eq!(moved, cfg(&[&[1], &[4, 5, 2, 3]]));
        // Card 2 against card 5: swap tops (2,3) and (5).
        let both = top_swap(&c, 3, 7).unwrap();
        assert_eq!(both, cfg(&[&[1, 5], &[4, 2, 3]]));
        // Same deck: identity.
        assert_eq!(top_swap(&c, 1, 3).unwrap(), c);
        // Two extra slots: identity.
        assert_eq!(top_swap(&c, 1, 5).unwrap(), c);
        // Symmetric in the pair.
        assert_eq!(top_swap(&c, 7, 3).unwrap(), both);
    }

    #[test]
    fn inversion_move_reverses_interval() {
        let c = cfg(&[&[1, 2, 3], &[]]);
        // Slots for cards 1 and 3 are 2 and 4.
        assert_eq!(inversion_move(&c, 2, 4).unwrap(), cfg(&[&[3, 2, 1], &[]]));
        // Extra slot plus card 2: reverse from card 2 to the top.
        assert_eq!(inversion_move(&c, 1, 3).unwrap(), cfg(&[&[1, 3, 2], &[]]));
        // Same position: identity.
        assert_eq!(inversion_move(&c, 2, 2).unwrap(), c);
        // Across decks it is the top-swap.
        assert_eq!(inversion_move(&c, 2, 5).unwrap(), top_swap(&c, 2, 5).unwrap());
    }

    #[test]
    fn constrained_transposition_decks_cases() {
        let c = cfg(&[&[1, 2, 3], &[4, 5]]);
        // Card 2 and card 4: in-place swap, decks keep their shape.
        assert_eq!(
            constrained_transposition_decks(&c, 3, 6).unwrap(),
            cfg(&[&[1, 4, 3], &[2, 5]])
        );
        // Extra slot of deck 1 with card 4: degenerates to the top-swap.
        assert_eq!(
            constrained_transposition_decks(&c, 1, 6).unwrap(),
            top_swap(&c, 1, 6).unwrap()
        );
        assert_ne!(constrained_transposition_decks(&c, 1, 6).unwrap(), c);
        // Same deck / both extras: identity.
        assert_eq!(constrained_transposition_decks(&c, 2, 3).unwrap(), c);
    }

    #[test]
    fn resample_preserves_other_decks() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let c = cfg(&[&[1, 2], &[3], &[4, 5]]);
        for _ in 0..200 {
            let r = deck_average_resample(&c, 0, 2, &mut rng).unwrap();
            assert_eq!(r.deck(1), &[3]);
            let mut pool: Vec<Card> = r.deck(0).iter().chain(r.deck(2)).copied().collect();
            pool.sort_unstable();
            assert_eq!(pool, vec![1, 2, 4, 5]);
        }
        assert!(deck_average_resample(&c, 1, 1, &mut rng).is_err());
    }

    #[test]
    fn pool_arrangement_count() {
        let c = cfg(&[&[1, 2], &[3], &[4]]);
        // Pool of decks 1,2 has 3 cards: 4! = 24 arrangements.
        assert_eq!(pool_arrangements(&c, 0, 1).len(), 24);
        // Pool of decks 2,3: 2 cards, 3! = 6.
        assert_eq!(pool_arrangements(&c, 1, 2).len(), 6);
    }

    #[test]
    fn discrete_rows_are_distributions() {
        for kernel in [
            KernelId::TopSwap,
            KernelId::ConstrainedTranspositionDecks,
            KernelId::TopSwapInversion,
        ] {
            for c in enumerate(3, 3) {
                let row = transition_distribution(kernel, &ChainState::Decks(c)).unwrap();
                assert_eq!(row.kind, TimeKind::Discrete);
                let total: f64 = row.entries.iter().map(|(_, p)| p).sum();
                assert!((total - 1.0).abs() < 1e-12);
                assert!(row.entries.iter().all(|(_, p)| *p >= 0.0));
            }
        }
        for kernel in [
            KernelId::TopSwapLine,
            KernelId::ModifiedTransposition,
            KernelId::ConstrainedTranspositionLine,
            KernelId::PureTransposition,
        ] {
            for l in enumerate_lines(3) {
                let row = transition_distribution(kernel, &ChainState::Line(l)).unwrap();
                let total: f64 = row.entries.iter().map(|(_, p)| p).sum();
                assert!((total - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn generator_rows_sum_to_zero() {
        for kernel in [
            KernelId::BalancedSwap(0.25),
            KernelId::BalancedSwapTranspose(0.25),
        ] {
            for l in enumerate_lines(3) {
                let row = transition_distribution(kernel, &ChainState::Line(l)).unwrap();
                assert_eq!(row.kind, TimeKind::Generator);
                let total: f64 = row.entries.iter().map(|(_, p)| p).sum();
                assert!(total.abs() < 1e-12);
            }
        }
        for kernel in [KernelId::DeckAverage, KernelId::DeckAverageWeighted] {
            for c in enumerate(3, 3) {
                let row = transition_distribution(kernel, &ChainState::Decks(c)).unwrap();
                let total: f64 = row.entries.iter().map(|(_, p)| p).sum();
                assert!(total.abs() < 1e-12, "{total}");
            }
        }
    }

    #[test]
    fn holding_mass_from_empty_deck_state() {
        // All cards in deck 1 of two: moves that change the state are exactly
        // those pairing a deck-1 slot with a deck-2 slot, minus the empty-top
        // exchange.
        let c = Configuration::stacked(3, 2);
        let row = transition_distribution(KernelId::TopSwap, &ChainState::Decks(c.clone())).unwrap();
        let hold = row
            .entries
            .iter()
            .find(|(s, _)| matches!(s, ChainState::Decks(x) if *x == c))
            .map(|(_, p)| *p)
            .unwrap();
        // 25 same-deck pairs (16 + 9... deck 1 has 4 slots, deck 2 has 1) plus
        // the 2 ordered empty-top pairs: (16 + 1 + 2)/25.
        assert!((hold - 19.0 / 25.0).abs() < 1e-12);
    }

    #[test]
    fn space_mismatch_rejected() {
        let c = Configuration::stacked(2, 2);
        assert!(transition_distribution(KernelId::TopSwapLine, &ChainState::Decks(c)).is_err());
        let l = Line::stacked(2);
        assert!(transition_distribution(KernelId::TopSwap, &ChainState::Line(l)).is_err());
    }
}
