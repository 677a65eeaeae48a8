//! Word error rate via word-level Levenshtein distance.

use super::FeError;

/// Minimum number of word edits (substitutions, insertions, deletions at
/// unit cost) turning `hypothesis` into `reference`.
pub fn edit_distance<A: AsRef<str>, B: AsRef<str>>(hypothesis: &[A], reference: &[B]) -> usize {
    let n = reference.len();
    let m = hypothesis.len();
    let mut dp = vec![vec![0usize; m + 1]; n + 1];
    for (i, row) in dp.iter_mut().enumerate() {
        row[0] = i;
    }
    for j in 0..=m {
        dp[0][j] = j;
    }
    for i in 1..=n {
        for j in 1..=m {
            let cost = usize::from(reference[i - 1].as_ref() != hypothesis[j - 1].as_ref());
            dp[i][j] = (dp[i - 1][j] + 1).min(dp[i][j - 1] + 1).min(dp[i - 1][j - 1] + cost);
        }
    }
    dp[n][m]
}

/// Word error rate as a percentage of the reference length.
///
/// Computed as `100 * (edits / reference_len)`, dividing before the scale
/// so the arithmetic path matches the eWER estimator's.
pub fn wer<A: AsRef<str>, B: AsRef<str>>(hypothesis: &[A], reference: &[B]) -> Result<f64, FeError> {
    if reference.is_empty() {
        return Err(FeError::EmptyReference);
    }
    let edits = edit_distance(hypothesis, reference);
    Ok(100.0 * (edits as f64 / reference.len() as f64))
}

/// Per-hypothesis-word correctness under an optimal alignment: a word is
/// correct iff it aligns to an equal reference word.
///
/// Equal-length inputs compare positionally (with substitution-only errors
/// the diagonal alignment is optimal); otherwise the DP alignment is
/// backtraced preferring diagonal moves.
pub fn correctness_labels<A: AsRef<str>, B: AsRef<str>>(hypothesis: &[A], reference: &[B]) -> Vec<bool> {
    if hypothesis.len() == reference.len() {
        return hypothesis
            .iter()
            .zip(reference)
            .map(|(h, r)| h.as_ref() == r.as_ref())
            .collect();
    }

    let n = reference.len();
    let m = hypothesis.len();
    let mut dp = vec![vec![0usize; m + 1]; n + 1];
    for (i, row) in dp.iter_mut().enumerate() {
        row[0] = i;
    }
    for j in 0..=m {
        dp[0][j] = j;
    }
    for i in 1..=n {
        for j in 1..=m {
            let cost = usize::from(reference[i - 1].as_ref() != hypothesis[j - 1].as_ref());
            dp[i][j] = (dp[i - 1][j] + 1).min(dp[i][j - 1] + 1).min(dp[i - 1][j - 1] + cost);
        }
    }

    let mut labels = vec![false; m];
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        if i > 0 && j > 0 {
            let cost = usize::from(reference[i - 1].as_ref() != hypothesis[j - 1].as_ref());
            if dp[i][j] == dp[i - 1][j - 1] + cost {
                labels[j - 1] = cost == 0;
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i > 0 && dp[i][j] == dp[i - 1][j] + 1 {
            // Deletion: a reference word with no hypothesis counterpart.
            i -= 1;
        } else {
            // Insertion: the hypothesis word is spurious.
            j -= 1;
        }
    }
    labels
}

#[cfg(test)]
mod tests {
    use super::*;

    fn words(text: &str) -> Vec<String> {
        text.split_whitespace().map(str::to_string).collect()
    }

    #[test]
    fn identical_words_zero_wer() {
        assert_eq!(wer(&words("a b c"), &words("a b c")).unwrap(), 0.0);
    }

    #[test]
    fn single_substitution() {
        let value = wer(&words("a b c"), &words("a x c")).unwrap();
        assert!((value - 100.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn single_deletion() {
        let value = wer(&words("a b"), &words("a b c")).unwrap();
        assert!((value - 100.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn insertion_and_mixed_edits() {
        assert_eq!(edit_distance(&words("a b c d"), &words("a b c")), 1);
        assert_eq!(edit_distance(&words("x y"), &words("a b c")), 3);
        assert_eq!(edit_distance(&Vec::<String>::new(), &words("a b")), 2);
    }

    #[test]
    fn empty_reference_errors() {
        assert!(matches!(
            wer(&words("a"), &Vec::<String>::new()),
            Err(FeError::EmptyReference)
        ));
    }

    #[test]
    fn wer_can_exceed_hundred() {
        let value = wer(&words("x y z w"), &words("a")).unwrap();
        assert!(value > 100.0);
    }

    #[test]
    fn equal_length_labels_are_positional() {
        let labels = correctness_labels(&words("a q c"), &words("a b c"));
        assert_eq!(labels, vec![true, false, true]);
    }

    #[test]
    fn deletion_labels_preserve_matches() {
        // Reference "a b c", hypothesis "a c": both surviving words correct.
        let labels = correctness_labels(&words("a c"), &words("a b c"));
        assert_eq!(labels, vec![true, true]);
    }

    #[test]
    fn insertion_labeled_incorrect() {
        let labels = correctness_labels(&words("a b x c"), &words("a b c"));
        assert_eq!(labels, vec![true, true, false, true]);
    }
}
