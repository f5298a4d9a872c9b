use crate::dataio::ScoreSet;
use crate::error::{Error, Result};

/// Equal-weight mean of several systems' scores, in the first set's order.
///
/// Each utterance's scores are summed in sorted order, so the result does
/// not depend on the order of `sets`.
pub fn fuse(sets: &[&ScoreSet]) -> Result<ScoreSet> {
    let first = sets.first().ok_or_else(|| Error::data("nothing to fuse"))?;
    for (i, s) in sets.iter().enumerate().skip(1) {
        let only_first: Vec<&str> = first.iter().map(|(u, _)| u).filter(|u| !s.contains(u)).collect();
        let only_other: Vec<&str> = s.iter().map(|(u, _)| u).filter(|u| !first.contains(u)).collect();
        if !only_first.is_empty() || !only_other.is_empty() {
            let show = |v: &[&str]| v.iter().take(5).copied().collect::<Vec<_>>().join(", ");
            return Err(Error::data(format!(
                "score set {} differs from set 0: {} ids only in set 0 [{}], {} only in set {i} [{}]",
                i,
                only_first.len(),
                show(&only_first),
                only_other.len(),
                show(&only_other)
            )));
        }
    }
    let mut out = ScoreSet::new();
    let n = sets.len() as f64;
    for (utt, _) in first.iter() {
        let mut v: Vec<f64> = sets.iter().map(|s| s.get(utt).expect("same ids")).collect();
        v.sort_by(f64::total_cmp);
        out.insert(utt, v.iter().sum::<f64>() / n)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(pairs: &[(&str, f64)]) -> ScoreSet {
        pairs.iter().map(|&(u, s)| (u.to_string(), s)).collect()
    }

    #[test]
    fn averages() {
        let f = fuse(&[&set(&[("u", 0.2)]), &set(&[("u", 0.4)])]).unwrap();
        assert!((f.get("u").unwrap() - 0.3).abs() < 1e-15);
        let a = set(&[("u", 0.2), ("v", -1.0)]);
        assert_eq!(fuse(&[&a]).unwrap(), a);
    }

    #[test]
    fn order_invariant() {
        let a = set(&[("u", 0.1), ("v", 3.0)]);
        let b = set(&[("v", 0.7), ("u", 0.2)]);
        let c = set(&[("u", 0.3), ("v", -1e-3)]);
        assert_eq!(fuse(&[&a, &b, &c]).unwrap(), fuse(&[&c, &a, &b]).unwrap());
    }

    #[test]
    fn mismatched_ids_are_listed() {
        let err = fuse(&[&set(&[("u", 0.1)]), &set(&[("w", 0.2)])]).unwrap_err().to_string();
        assert!(err.contains('u') && err.contains('w'));
        assert!(fuse(&[]).is_err());
    }
}
