use std::collections::BTreeMap;
use std::fmt;

use crate::embeddings::{cosine, EmbeddingTable};
use crate::error::{Error, Result};
use crate::parallel;

/// One token pair whose cosine similarity changed bins.
#[derive(Debug, Clone, PartialEq)]
pub struct PairMove {
    pub a: String,
    pub b: String,
    pub before: f64,
    pub after: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MoveBin {
    pub from: f64,
    pub to: f64,
    pub count: usize,
    /// Largest moves first.
    pub top: Vec<PairMove>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MovedPairs {
    pub pairs: usize,
    /// Bins with `from ≠ to`, ordered by `from` then `to`, both descending.
    pub bins: Vec<MoveBin>,
    /// Pairs that landed in a lower bin.
    pub decoupled: usize,
    /// Pairs that landed in a higher bin.
    pub coupled: usize,
}

impl MovedPairs {
    /// Decoupled per coupled pair; `None` when nothing moved closer.
    pub fn decouple_ratio(&self) -> Option<f64> {
        (self.coupled > 0).then(|| self.decoupled as f64 / self.coupled as f64)
    }
}

impl fmt::Display for MovedPairs {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "From\tTo\tCount\tWord Pairs")?;
        for bin in &self.bins {
            let pairs: Vec<String> = bin
                .top
                .iter()
                .map(|p| format!("({}, {})", p.a, p.b))
                .collect();
            writeln!(
                f,
                "μ={}\tμ={}\t{}\t{}",
                bin.from,
                bin.to,
                bin.count,
                pairs.join(", ")
            )?;
        }
        let ratio = self
            .decouple_ratio()
            .map_or_else(|| "n/a".to_string(), |r| format!("{r:.3}"));
        writeln!(
            f,
            "pairs={} decoupled={} coupled={} ratio={ratio}",
            self.pairs, self.decoupled, self.coupled
        )
    }
}

/// Index of the nearest grid value, ties to the earlier entry.
fn nearest(grid: &[f64], x: f64) -> usize {
    let mut best = 0;
    for (i, &g) in grid.iter().enumerate() {
        if (x - g).abs() < (x - grid[best]).abs() {
            best = i;
        }
    }
    best
}

#[derive(Default)]
struct Cell {
    count: usize,
    top: Vec<(f64, usize, usize, f64, f64)>,
}

impl Cell {
    fn push(&mut self, entry: (f64, usize, usize, f64, f64), k: usize) {
        self.count += 1;
        self.top.push(entry);
        if self.top.len() > 2 * k.max(1) {
            self.trim(k);
        }
    }

    fn trim(&mut self, k: usize) {
        self.top
            .sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
        self.top.truncate(k);
    }
}

/// Compares every token pair's cosine similarity in two tables over the
/// same vocabulary. Each similarity is assigned to the nearest value of
/// `grid`; pairs whose bin changed are counted per `(from, to)` cell and the
/// `top_k` largest moves of each cell are kept.
pub fn moved_word_pairs(
    before: &EmbeddingTable,
    after: &EmbeddingTable,
    grid: &[f64],
    top_k: usize,
) -> Result<MovedPairs> {
    if before.tokens() != after.tokens() {
        return Err(Error::invalid(
            "embedding tables have different vocabularies",
        ));
    }
    if grid.is_empty() || grid.iter().any(|g| !g.is_finite()) {
        return Err(Error::invalid("bin grid must be non-empty and finite"));
    }
    let n = before.len();
    let rows: Vec<usize> = (0..n).collect();
    let per_row = parallel::map(&rows, |_, &i| {
        let mut cells: BTreeMap<(usize, usize), Cell> = BTreeMap::new();
        let (bi, ai) = (before.vectors().row(i), after.vectors().row(i));
        for j in i + 1..n {
            let b = cosine(bi, before.vectors().row(j));
            let a = cosine(ai, after.vectors().row(j));
            let (from, to) = (nearest(grid, b), nearest(grid, a));
            if grid[from] != grid[to] {
                cells
                    .entry((from, to))
                    .or_default()
                    .push(((a - b).abs(), i, j, b, a), top_k);
            }
        }
        cells
    });

    let mut merged: BTreeMap<(usize, usize), Cell> = BTreeMap::new();
    for cells in per_row {
        for (key, cell) in cells {
            let m = merged.entry(key).or_default();
            m.count += cell.count;
            m.top.extend(cell.top);
            m.trim(top_k);
        }
    }
    let tokens = before.tokens();
    let mut bins: Vec<MoveBin> = merged
        .into_iter()
        .map(|((from, to), mut cell)| {
            cell.trim(top_k);
            MoveBin {
                from: grid[from],
                to: grid[to],
                count: cell.count,
                top: cell
                    .top
                    .into_iter()
                    .map(|(_, i, j, b, a)| PairMove {
                        a: tokens[i].clone(),
                        b: tokens[j].clone(),
                        before: b,
                        after: a,
                    })
                    .collect(),
            }
        })
        .collect();
    bins.sort_by(|x, y| y.from.total_cmp(&x.from).then(y.to.total_cmp(&x.to)));
    let decoupled = bins.iter().filter(|b| b.to < b.from).map(|b| b.count).sum();
    let coupled = bins.iter().filter(|b| b.to > b.from).map(|b| b.count).sum();
    Ok(MovedPairs {
        pairs: n * n.saturating_sub(1) / 2,
        bins,
        decoupled,
        coupled,
    })
}

/// `-1.0, -0.9, …, 1.0`.
pub fn tenths_grid() -> Vec<f64> {
    (-10..=10).map(|i| i as f64 / 10.0).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::Tensor;

    fn table(rows: &[[f64; 2]]) -> EmbeddingTable {
        let tokens = (0..rows.len()).map(|i| format!("t{i}")).collect();
        let data = rows.iter().flat_map(|r| r.iter().copied()).collect();
        EmbeddingTable::new(tokens, Tensor::new(vec![rows.len(), 2], data).unwrap()).unwrap()
    }

    fn unit(angle: f64) -> [f64; 2] {
        [angle.cos(), angle.sin()]
    }

    #[test]
    fn identical_tables_move_nothing() {
        let t = table(&[unit(0.0), unit(0.4), unit(1.3), unit(2.9), [0.2, -0.7]]);
        let r = moved_word_pairs(&t, &t, &tenths_grid(), 3).unwrap();
        assert!(r.bins.is_empty());
        assert_eq!((r.decoupled, r.coupled, r.pairs), (0, 0, 10));
        assert_eq!(r.decouple_ratio(), None);
    }

    #[test]
    fn planted_pair_lands_in_its_cell() {
        // t0 fixed; t1 rotated from cos 0.8 to cos 0.1 relative to it
        let before = table(&[unit(0.0), unit(0.8f64.acos()), unit(2.5)]);
        let after = table(&[unit(0.0), unit(0.1f64.acos()), unit(2.5)]);
        let r = moved_word_pairs(&before, &after, &tenths_grid(), 2).unwrap();
        let cell = r
            .bins
            .iter()
            .find(|b| (b.from - 0.8).abs() < 1e-12 && (b.to - 0.1).abs() < 1e-12)
            .expect("0.8 → 0.1 cell");
        assert_eq!(cell.count, 1);
        assert_eq!(
            (cell.top[0].a.as_str(), cell.top[0].b.as_str()),
            ("t0", "t1")
        );
        assert!((cell.top[0].before - 0.8).abs() < 1e-12);
        assert!((cell.top[0].after - 0.1).abs() < 1e-12);
        assert!(r.decoupled >= 1);
        let text = r.to_string();
        assert!(text.starts_with("From\tTo\tCount\tWord Pairs\n"));
        assert!(text.contains("μ=0.8\tμ=0.1\t1\t(t0, t1)"));
    }

    #[test]
    fn counts_direction_and_keeps_largest_moves() {
        // t1..t3 all start at cos ≈ 0.9 with t0 and end at ≈ 0.2 by different amounts
        let before = table(&[
            unit(0.0),
            unit(0.9f64.acos()),
            unit(0.88f64.acos()),
            unit(0.92f64.acos()),
        ]);
        let after = table(&[
            unit(0.0),
            unit(0.2f64.acos()),
            unit(0.16f64.acos()),
            unit(0.22f64.acos()),
        ]);
        let r = moved_word_pairs(&before, &after, &tenths_grid(), 2).unwrap();
        let cell = r
            .bins
            .iter()
            .find(|b| (b.from - 0.9).abs() < 1e-12 && (b.to - 0.2).abs() < 1e-12)
            .unwrap();
        assert_eq!(cell.count, 3);
        let top: Vec<&str> = cell.top.iter().map(|p| p.b.as_str()).collect();
        assert_eq!(top, ["t2", "t1"]);
        assert_eq!(
            r.decoupled + r.coupled,
            r.bins.iter().map(|b| b.count).sum::<usize>()
        );
    }

    #[test]
    fn vocabulary_mismatch_is_an_error() {
        let a = table(&[unit(0.0), unit(1.0)]);
        let b = EmbeddingTable::new(vec!["x".into(), "y".into()], a.vectors().clone()).unwrap();
        assert!(moved_word_pairs(&a, &b, &tenths_grid(), 1).is_err());
        assert!(moved_word_pairs(&a, &a, &[], 1).is_err());
    }
}
