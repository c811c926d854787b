use serde::{Deserialize, Serialize};

use super::IoError;
use crate::geometry::{Segment, SegmentId};

pub const DEFAULT_MATCH_RADIUS: f64 = 0.5;
pub const DEFAULT_NON_MATCH_RADIUS: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairLabelKind {
    Match,
    NonMatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairLabel {
    pub segment_a: SegmentId,
    pub segment_b: SegmentId,
    pub label: PairLabelKind,
}

/// Labels every cross pair by 3D centroid distance: `< match_radius` is a
/// match, `> non_match_radius` a non-match. Pairs in between are omitted.
pub fn generate_pair_labels(
    segments_a: &[Segment],
    segments_b: &[Segment],
    match_radius: f64,
    non_match_radius: f64,
) -> Result<Vec<PairLabel>, IoError> {
    if !(match_radius < non_match_radius) || match_radius.is_nan() {
        return Err(IoError::InvalidRadii { match_radius, non_match_radius });
    }
    if segments_a.is_empty() || segments_b.is_empty() {
        return Err(IoError::EmptyInput("pair labelling needs two non-empty segment sets"));
    }
    let mut labels = Vec::new();
    for a in segments_a {
        for b in segments_b {
            let d = a.centroid().distance(&b.centroid());
            let label = if d < match_radius {
                PairLabelKind::Match
            } else if d > non_match_radius {
                PairLabelKind::NonMatch
            } else {
                continue;
            };
            labels.push(PairLabel { segment_a: a.id, segment_b: b.id, label });
        }
    }
    Ok(labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{CloudId, Point3};
    use proptest::prelude::*;

    fn seg(id: u32, x: f64) -> Segment {
        Segment::new(SegmentId(id), CloudId(0), vec![Point3::new(x, 0.0, 0.0)]).unwrap()
    }

    #[test]
    fn radius_rules() {
        let a = [seg(0, 0.0)];
        let close = generate_pair_labels(&a, &[seg(1, 0.3)], 0.5, 20.0).unwrap();
        assert_eq!(close[0].label, PairLabelKind::Match);
        let far = generate_pair_labels(&a, &[seg(1, 25.0)], 0.5, 20.0).unwrap();
        assert_eq!(far[0].label, PairLabelKind::NonMatch);
        assert!(generate_pair_labels(&a, &[seg(1, 5.0)], 0.5, 20.0).unwrap().is_empty());
    }

    #[test]
    fn invalid_radii() {
        let a = [seg(0, 0.0)];
        assert!(matches!(generate_pair_labels(&a, &a, 20.0, 0.5), Err(IoError::InvalidRadii { .. })));
        assert!(matches!(generate_pair_labels(&a, &a, 1.0, 1.0), Err(IoError::InvalidRadii { .. })));
        assert!(generate_pair_labels(&a, &[], 0.5, 20.0).is_err());
    }

    proptest! {
        #[test]
        fn labels_are_symmetric(xs in prop::collection::vec(-60.0f64..60.0, 1..12), ys in prop::collection::vec(-60.0f64..60.0, 1..12)) {
            let a: Vec<_> = xs.iter().enumerate().map(|(i, &x)| seg(i as u32, x)).collect();
            let b: Vec<_> = ys.iter().enumerate().map(|(i, &y)| seg(100 + i as u32, y)).collect();
            let ab = generate_pair_labels(&a, &b, 0.5, 20.0).unwrap();
            let ba = generate_pair_labels(&b, &a, 0.5, 20.0).unwrap();
            prop_assert_eq!(ab.len(), ba.len());
            for l in &ab {
                let mirrored = ba.iter().find(|m| m.segment_a == l.segment_b && m.segment_b == l.segment_a);
                prop_assert_eq!(mirrored.map(|m| m.label), Some(l.label));
            }
            for l in &ab {
                let d = (xs[l.segment_a.0 as usize] - ys[(l.segment_b.0 - 100) as usize]).abs();
                match l.label {
                    PairLabelKind::Match => prop_assert!(d < 0.5),
                    PairLabelKind::NonMatch => prop_assert!(d > 20.0),
                }
            }
        }
    }
}
