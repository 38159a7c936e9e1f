use std::collections::BTreeSet;
use std::fmt;

use serde::Serialize;

use super::{RelationTuple, SurfaceTuple};

/// Entity-overlap class of a sentence's tuple set.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum OverlapClass {
    /// No entity shared between tuples.
    Neo,
    /// Some entity pair carries more than one relation.
    Epo,
    /// Some pair of tuples shares exactly one entity.
    Seo,
}

impl OverlapClass {
    pub const ALL: [OverlapClass; 3] = [OverlapClass::Neo, OverlapClass::Epo, OverlapClass::Seo];

    pub fn label(self) -> &'static str {
        match self {
            OverlapClass::Neo => "NEO",
            OverlapClass::Epo => "EPO",
            OverlapClass::Seo => "SEO",
        }
    }
}

impl fmt::Display for OverlapClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Anything with a head and tail entity string.
pub trait EntityPair {
    fn head(&self) -> &str;
    fn tail(&self) -> &str;
}

impl EntityPair for SurfaceTuple {
    fn head(&self) -> &str {
        &self.head
    }
    fn tail(&self) -> &str {
        &self.tail
    }
}

impl EntityPair for RelationTuple {
    fn head(&self) -> &str {
        &self.e1_text
    }
    fn tail(&self) -> &str {
        &self.e2_text
    }
}

/// Overlap classes present in a tuple set. A sentence can be both EPO and
/// SEO; it is NEO only when it is neither. The empty set has no class.
pub fn classify_overlap<P: EntityPair>(tuples: &[P]) -> BTreeSet<OverlapClass> {
    let mut out = BTreeSet::new();
    if tuples.is_empty() {
        return out;
    }
    for (i, a) in tuples.iter().enumerate() {
        for b in &tuples[i + 1..] {
            let ea: BTreeSet<&str> = [a.head(), a.tail()].into_iter().collect();
            let eb: BTreeSet<&str> = [b.head(), b.tail()].into_iter().collect();
            let shared = ea.intersection(&eb).count();
            if shared == 0 {
                continue;
            }
            if ea == eb {
                out.insert(OverlapClass::Epo);
            } else {
                out.insert(OverlapClass::Seo);
            }
        }
    }
    if out.is_empty() {
        out.insert(OverlapClass::Neo);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(h: &str, tl: &str, r: &str) -> SurfaceTuple {
        SurfaceTuple::new(h, tl, r)
    }

    fn classes(ts: &[SurfaceTuple]) -> Vec<&'static str> {
        classify_overlap(ts).into_iter().map(OverlapClass::label).collect()
    }

    #[test]
    fn single_tuple_is_neo() {
        assert_eq!(classes(&[t("a", "b", "r")]), ["NEO"]);
    }

    #[test]
    fn disjoint_pairs_are_neo() {
        assert_eq!(classes(&[t("a", "b", "r"), t("c", "d", "r")]), ["NEO"]);
    }

    #[test]
    fn same_pair_is_epo_in_either_order() {
        assert_eq!(classes(&[t("a", "b", "r"), t("a", "b", "s")]), ["EPO"]);
        assert_eq!(classes(&[t("a", "b", "r"), t("b", "a", "s")]), ["EPO"]);
    }

    #[test]
    fn one_shared_entity_is_seo() {
        assert_eq!(classes(&[t("a", "b", "r"), t("b", "c", "s")]), ["SEO"]);
        assert_eq!(classes(&[t("a", "b", "r"), t("a", "c", "s")]), ["SEO"]);
    }

    #[test]
    fn both_classes_can_hold() {
        let ts = [t("a", "b", "r"), t("a", "b", "s"), t("a", "c", "r")];
        assert_eq!(classes(&ts), ["EPO", "SEO"]);
    }

    #[test]
    fn empty_has_no_class() {
        assert!(classify_overlap::<SurfaceTuple>(&[]).is_empty());
    }

    #[test]
    fn fixture_sentence_is_epo() {
        let ts = [
            t("Somalia", "Mogadishu", "/location/country/capital"),
            t("Somalia", "Mogadishu", "/location/location/contains"),
        ];
        assert_eq!(classes(&ts), ["EPO"]);
    }

    use proptest::prelude::*;

    /// Pairwise checker written straight from the class definitions.
    fn oracle(ts: &[SurfaceTuple]) -> BTreeSet<OverlapClass> {
        let mut out = BTreeSet::new();
        let mut any_shared = false;
        for i in 0..ts.len() {
            for j in 0..ts.len() {
                if i == j {
                    continue;
                }
                let (a, b) = (&ts[i], &ts[j]);
                let same = (a.head == b.head && a.tail == b.tail) || (a.head == b.tail && a.tail == b.head);
                let shared = [&a.head, &a.tail].iter().filter(|e| **e == &b.head || **e == &b.tail).count();
                if same {
                    out.insert(OverlapClass::Epo);
                    any_shared = true;
                } else if shared > 0 {
                    out.insert(OverlapClass::Seo);
                    any_shared = true;
                }
            }
        }
        if !ts.is_empty() && !any_shared {
            out.insert(OverlapClass::Neo);
        }
        out
    }

    proptest! {
        #[test]
        fn agrees_with_pairwise_oracle(raw in proptest::collection::vec((0u8..5, 0u8..5, 0u8..3), 1..=6)) {
            let ts: Vec<SurfaceTuple> = raw
                .into_iter()
                .filter(|(h, t, _)| h != t)
                .map(|(h, t, r)| SurfaceTuple::new(format!("e{h}"), format!("e{t}"), format!("r{r}")))
                .collect();
            prop_assert_eq!(classify_overlap(&ts), oracle(&ts));
        }
    }

    #[test]
    fn mixed_example_from_definitions() {
        let ts = [t("A", "B", "r1"), t("B", "A", "r2"), t("A", "C", "r3")];
        assert_eq!(classes(&ts), ["EPO", "SEO"]);
    }
}
