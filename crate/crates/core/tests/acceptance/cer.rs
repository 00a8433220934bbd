use cascade_asr::evaluation::{align, score_corpus};

use super::{verdict, Check};

const MAX: usize = 6;

fn strings() -> Vec<Vec<u8>> {
    let mut all = vec![Vec::new()];
    let mut start = 0;
    for _ in 0..MAX {
        let end = all.len();
        for i in start..end {
            for c in [b'a', b'b', b'c'] {
                let mut s = all[i].clone();
                s.push(c);
                all.push(s);
            }
        }
        start = end;
    }
    all
}

/// Edit distance by full recursion with memoization on suffix pairs, a
/// different formulation from the prefix table used by the library.
fn oracle(a: &[u8], b: &[u8], memo: &mut std::collections::HashMap<(usize, usize), usize>) -> usize {
    if a.is_empty() || b.is_empty() {
        return a.len() + b.len();
    }
    let key = (a.len(), b.len());
    if let Some(&d) = memo.get(&key) {
        return d;
    }
    let sub = oracle(&a[1..], &b[1..], memo) + (a[0] != b[0]) as usize;
    let del = oracle(&a[1..], b, memo) + 1;
    let ins = oracle(a, &b[1..], memo) + 1;
    let d = sub.min(del).min(ins);
    memo.insert(key, d);
    d
}

fn rate(reference: &str, hypothesis: &str) -> Result<f64, String> {
    let w = |s: &str| if s.is_empty() { vec![] } else { vec![s.to_string()] };
    let r = score_corpus(&[("u".into(), w(reference))], &[("u".into(), w(hypothesis))]).map_err(|e| e.to_string())?;
    Ok(r.cer())
}

pub fn check() -> Check {
    let all = strings();
    let mut mismatches = 0usize;
    let mut pairs = 0usize;
    for r in &all {
        for h in &all {
            let mut memo = std::collections::HashMap::new();
            let c = align(r, h);
            if c.errors() != oracle(r, h, &mut memo) {
                mismatches += 1;
            }
            pairs += 1;
        }
    }
    let same = rate("abc", "abc")?;
    let empty = rate("abc", "")?;
    let one_sub = rate("axc", "abc")?;
    let sub_counts = align(b"axc", b"abc");
    let fixtures_ok = same == 0.0 && empty == 100.0 && format!("{one_sub:.2}") == "33.33" && sub_counts.substitutions == 1 && sub_counts.errors() == 1;
    verdict(
        mismatches == 0 && fixtures_ok,
        format!("{pairs} pairs, {mismatches} mismatches; fixtures {same:.2}% / {empty:.2}% / {one_sub:.2}%"),
    )
}
