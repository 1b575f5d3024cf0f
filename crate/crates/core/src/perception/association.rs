use crate::models::LandmarkPosition;

/// Default association gate in metres.
pub const DEFAULT_MAX_DISTANCE: f64 = 0.3;
/// Default minimum spacing between landmarks kept from one scan.
pub const DEFAULT_MIN_SEPARATION: f64 = 2.0;

/// Mutual nearest-neighbour matching between two point sets.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AssociationResult {
    /// `(new index, prior index)`, ordered by new index.
    pub pairs: Vec<(usize, usize)>,
    pub unmatched_new: Vec<usize>,
    pub unmatched_prior: Vec<usize>,
}

impl AssociationResult {
    /// Prior index matched to `new`, if any.
    pub fn prior_for(&self, new: usize) -> Option<usize> {
        self.pairs.iter().find(|(n, _)| *n == new).map(|(_, p)| *p)
    }
}

/// Index of the nearest point; exact ties go to the lowest index.
fn nearest(from: &LandmarkPosition, to: &[LandmarkPosition]) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (j, p) in to.iter().enumerate() {
        let d = from.distance_to(p);
        if best.is_none_or(|(_, bd)| d < bd) {
            best = Some((j, d));
        }
    }
    best
}

/// Pairs `new[i]` with `prior[j]` when each is the other's nearest neighbour
/// and they lie within `d_max` of each other.
pub fn associate(
    new: &[LandmarkPosition],
    prior: &[LandmarkPosition],
    d_max: f64,
) -> AssociationResult {
    let nearest_prior: Vec<_> = new.iter().map(|p| nearest(p, prior)).collect();
    let nearest_new: Vec<_> = prior.iter().map(|p| nearest(p, new)).collect();

    let mut result = AssociationResult::default();
    let mut prior_taken = vec![false; prior.len()];
    for (i, best) in nearest_prior.iter().enumerate() {
        match best {
            Some((j, d)) if *d <= d_max && nearest_new[*j].map(|(k, _)| k) == Some(i) => {
                result.pairs.push((i, *j));
                prior_taken[*j] = true;
            }
            _ => result.unmatched_new.push(i),
        }
    }
    result.unmatched_prior = (0..prior.len()).filter(|&j| !prior_taken[j]).collect();
    result
}

/// Indices of landmarks with no other landmark within `min_separation`.
pub fn isolated_indices(landmarks: &[LandmarkPosition], min_separation: f64) -> Vec<usize> {
    (0..landmarks.len())
        .filter(|&i| {
            landmarks
                .iter()
                .enumerate()
                .all(|(j, q)| i == j || landmarks[i].distance_to(q) > min_separation)
        })
        .collect()
}

/// Drops every landmark that has a neighbour within `min_separation`; both
/// members of a close pair go.
pub fn prefilter(landmarks: &[LandmarkPosition], min_separation: f64) -> Vec<LandmarkPosition> {
    isolated_indices(landmarks, min_separation)
        .into_iter()
        .map(|i| landmarks[i])
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts(v: &[(f64, f64)]) -> Vec<LandmarkPosition> {
        v.iter().map(|&(x, y)| LandmarkPosition::new(x, y)).collect()
    }

    #[test]
    fn single_mutual_pair() {
        let r = associate(&pts(&[(0.0, 0.0)]), &pts(&[(0.1, 0.0)]), 0.3);
        assert_eq!(r.pairs, vec![(0, 0)]);
        assert!(r.unmatched_new.is_empty() && r.unmatched_prior.is_empty());
    }

    #[test]
    fn gate_rejects_far_pair() {
        let r = associate(&pts(&[(0.0, 0.0)]), &pts(&[(5.0, 5.0)]), 0.3);
        assert!(r.pairs.is_empty());
        assert_eq!(r.unmatched_new, vec![0]);
        assert_eq!(r.unmatched_prior, vec![0]);
    }

    #[test]
    fn empty_inputs() {
        let r = associate(&[], &pts(&[(1.0, 1.0)]), 0.3);
        assert_eq!(r.unmatched_prior, vec![0]);
        let r = associate(&pts(&[(1.0, 1.0)]), &[], 0.3);
        assert_eq!(r.unmatched_new, vec![0]);
        assert_eq!(associate(&[], &[], 0.3), AssociationResult::default());
    }

    #[test]
    fn non_mutual_neighbour_is_not_paired() {
        // prior 0 is nearest to both new points but only new 1 is nearest to it
        let new = pts(&[(0.0, 0.0), (0.9, 0.0)]);
        let prior = pts(&[(1.0, 0.0)]);
        let r = associate(&new, &prior, 2.0);
        assert_eq!(r.pairs, vec![(1, 0)]);
        assert_eq!(r.unmatched_new, vec![0]);
    }

    #[test]
    fn ties_go_to_lowest_index() {
        let new = pts(&[(0.0, 0.0)]);
        let prior = pts(&[(1.0, 0.0), (-1.0, 0.0)]);
        let r = associate(&new, &prior, 2.0);
        assert_eq!(r.pairs, vec![(0, 0)]);
        assert_eq!(r.unmatched_prior, vec![1]);
    }

    #[test]
    fn prefilter_examples() {
        let kept = prefilter(&pts(&[(0.0, 0.0), (0.5, 0.0), (10.0, 0.0)]), 2.0);
        assert_eq!(kept, pts(&[(10.0, 0.0)]));

        let spread = pts(&[(0.0, 0.0), (3.0, 0.0), (0.0, 3.0)]);
        assert_eq!(prefilter(&spread, 2.0), spread);

        let grid: Vec<_> = (0..9)
            .map(|k| LandmarkPosition::new((k % 3) as f64, (k / 3) as f64))
            .collect();
        assert!(prefilter(&grid, 2.0).is_empty());
    }
}
