//! Filtered, stratified, seed-deterministic selection of study instances.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::Instance;
use crate::error::{Error, Result};

/// Most frequent value; ties go to the smallest value.
pub fn majority_vote<T: Ord + Clone>(values: &[T]) -> Result<T> {
    let mut counts: BTreeMap<&T, usize> = BTreeMap::new();
    for v in values {
        *counts.entry(v).or_default() += 1;
    }
    // BTreeMap iterates ascending, so the first maximum is the smallest value
    let mut best: Option<(&T, usize)> = None;
    for (v, n) in counts {
        if best.is_none_or(|(_, b)| n > b) {
            best = Some((v, n));
        }
    }
    best.map(|(v, _)| v.clone())
        .ok_or_else(|| Error::Invalid("majority vote over an empty list".into()))
}

fn default_n_total() -> usize {
    300
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplingSpec {
    /// Conjunctive `attribute == value` conditions on instance strata.
    #[serde(default)]
    pub filter: Vec<(String, String)>,
    pub strata_attribute: String,
    #[serde(default = "default_n_total")]
    pub n_total: usize,
    pub seed: u64,
}

impl SamplingSpec {
    pub fn matches(&self, instance: &Instance) -> bool {
        self.filter
            .iter()
            .all(|(attr, value)| instance.stratum(attr) == Some(value.as_str()))
    }
}

/// Parses `attr=value[,attr=value]`.
pub fn parse_filter(expr: &str) -> Result<Vec<(String, String)>> {
    expr.split(',')
        .filter(|part| !part.trim().is_empty())
        .map(|part| {
            let (attr, value) = part
                .split_once('=')
                .ok_or_else(|| Error::Invalid(format!("filter term {part:?} is not attr=value")))?;
            Ok((attr.trim().to_string(), value.trim().to_string()))
        })
        .collect()
}

/// Writes `attrs` joined by `|` into a new stratum `name`, so that several
/// attributes can be balanced jointly as one compound key.
pub fn compound_stratum(instances: &mut [Instance], attrs: &[&str], name: &str) -> Result<()> {
    for inst in instances.iter_mut() {
        let parts = attrs
            .iter()
            .map(|a| {
                inst.stratum(a).map(str::to_string).ok_or_else(|| {
                    Error::Invalid(format!("instance {:?} lacks stratum {a:?}", inst.id))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        inst.strata.insert(name.to_string(), parts.join("|"));
    }
    Ok(())
}

/// Splits `n` across strata with the given capacities (in key order).
///
/// Each stratum gets `n / k`, the remainder going one each to the first
/// strata. A stratum that cannot fill its quota gives everything it has and
/// its deficit is spread the same way across the others. Requires
/// `n <= sum(capacities)`.
pub fn allocate_quotas(capacities: &[usize], n: usize) -> Vec<usize> {
    let mut quotas = vec![0; capacities.len()];
    let mut active: Vec<usize> = (0..capacities.len()).collect();
    let mut remaining = n;
    while !active.is_empty() && remaining > 0 {
        let k = active.len();
        let (base, extra) = (remaining / k, remaining % k);
        let target = |pos: usize| base + usize::from(pos < extra);
        let short: Vec<usize> = active
            .iter()
            .enumerate()
            .filter(|&(pos, &s)| capacities[s] < target(pos))
            .map(|(_, &s)| s)
            .collect();
        if short.is_empty() {
            for (pos, &s) in active.iter().enumerate() {
                quotas[s] = target(pos);
            }
            break;
        }
        for &s in &short {
            quotas[s] = capacities[s];
            remaining -= capacities[s];
        }
        active.retain(|s| !short.contains(s));
    }
    quotas
}

/// Draws `spec.n_total` instances balanced over `spec.strata_attribute`.
///
/// Output is grouped by stratum key, each stratum in seeded draw order. The
/// draw is independent of input order.
pub fn stratified_sample(instances: &[Instance], spec: &SamplingSpec) -> Result<Vec<Instance>> {
    let filtered: Vec<&Instance> = instances.iter().filter(|i| spec.matches(i)).collect();
    if filtered.is_empty() {
        return Err(Error::EmptyPopulation);
    }
    if spec.n_total > filtered.len() {
        return Err(Error::InsufficientPopulation {
            requested: spec.n_total,
            available: filtered.len(),
        });
    }

    let mut strata: BTreeMap<&str, Vec<&Instance>> = BTreeMap::new();
    for inst in filtered {
        let key = inst.stratum(&spec.strata_attribute).ok_or_else(|| {
            Error::Invalid(format!(
                "instance {:?} lacks stratum {:?}",
                inst.id, spec.strata_attribute
            ))
        })?;
        strata.entry(key).or_default().push(inst);
    }

    let capacities: Vec<usize> = strata.values().map(Vec::len).collect();
    let quotas = allocate_quotas(&capacities, spec.n_total);

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut out = Vec::with_capacity(spec.n_total);
    for (members, quota) in strata.into_values().zip(quotas) {
        let mut members = members;
        members.sort_by(|a, b| a.id.cmp(&b.id));
        members.shuffle(&mut rng);
        out.extend(members.into_iter().take(quota).cloned());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn inst(id: usize, stratum: &str, extra: &[(&str, &str)]) -> Instance {
        let mut strata: BTreeMap<String, String> =
            extra.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
        strata.insert("s".into(), stratum.into());
        Instance {
            id: format!("i{id:04}"),
            task_id: "t".into(),
            text: format!("text {id}"),
            strata,
            gold: 0.0,
        }
    }

    fn population(sizes: &[usize]) -> Vec<Instance> {
        let mut out = Vec::new();
        for (s, &size) in sizes.iter().enumerate() {
            for _ in 0..size {
                out.push(inst(out.len(), &format!("s{s}"), &[]));
            }
        }
        out
    }

    fn counts(sample: &[Instance]) -> BTreeMap<String, usize> {
        let mut c = BTreeMap::new();
        for i in sample {
            *c.entry(i.strata["s"].clone()).or_default() += 1;
        }
        c
    }

    fn spec(n: usize, seed: u64) -> SamplingSpec {
        SamplingSpec {
            filter: vec![],
            strata_attribute: "s".into(),
            n_total: n,
            seed,
        }
    }

    #[test]
    fn majority_vote_examples() {
        assert_eq!(majority_vote(&["care", "care", "fairness"]).unwrap(), "care");
        assert_eq!(majority_vote(&["fairness", "care"]).unwrap(), "care");
        assert_eq!(majority_vote(&["x"]).unwrap(), "x");
        assert!(majority_vote::<&str>(&[]).is_err());
    }

    #[test]
    fn equal_strata_split_exactly() {
        let sample = stratified_sample(&population(&[100; 6]), &spec(300, 1)).unwrap();
        assert_eq!(sample.len(), 300);
        assert!(counts(&sample).values().all(|&c| c == 50));
    }

    #[test]
    fn seven_strata_remainder() {
        assert_eq!(allocate_quotas(&[100; 7], 300), vec![43, 43, 43, 43, 43, 43, 42]);
        let sample = stratified_sample(&population(&[100; 7]), &spec(300, 9)).unwrap();
        let c: Vec<usize> = counts(&sample).into_values().collect();
        assert_eq!(c, vec![43, 43, 43, 43, 43, 43, 42]);
    }

    #[test]
    fn shortfall_is_redistributed() {
        // six strata, quota 50 each; the first only has 10, the other five absorb 40
        assert_eq!(allocate_quotas(&[10, 100, 100, 100, 100, 100], 300), vec![10, 58, 58, 58, 58, 58]);
        let sample = stratified_sample(&population(&[10, 100, 100, 100, 100, 100]), &spec(300, 3)).unwrap();
        assert_eq!(sample.len(), 300);
        assert_eq!(counts(&sample)["s0"], 10);
    }

    #[test]
    fn filter_and_errors() {
        let mut pop = Vec::new();
        for i in 0..40 {
            let agree = if i % 2 == 0 { "high" } else { "low" };
            pop.push(inst(i, if i % 4 < 2 { "a" } else { "b" }, &[("agreement", agree)]));
        }
        let mut sp = spec(10, 0);
        sp.filter = parse_filter("agreement=high").unwrap();
        let sample = stratified_sample(&pop, &sp).unwrap();
        assert!(sample.iter().all(|i| i.strata["agreement"] == "high"));

        sp.n_total = 21;
        let err = stratified_sample(&pop, &sp).unwrap_err();
        assert!(matches!(err, Error::InsufficientPopulation { requested: 21, available: 20 }));

        sp.filter = parse_filter("agreement=none").unwrap();
        assert!(matches!(stratified_sample(&pop, &sp), Err(Error::EmptyPopulation)));
        assert!(parse_filter("nope").is_err());
    }

    #[test]
    fn compound_keys() {
        let mut pop = vec![inst(0, "a", &[("hate", "yes")])];
        compound_stratum(&mut pop, &["hate", "s"], "joint").unwrap();
        assert_eq!(pop[0].strata["joint"], "yes|a");
        assert!(compound_stratum(&mut pop, &["missing"], "j").is_err());
    }

    proptest! {
        #[test]
        fn sampling_invariants(
            sizes in prop::collection::vec(1usize..60, 1..8),
            frac in 0.0f64..1.0,
            seed_a in any::<u64>(),
            seed_b in any::<u64>(),
        ) {
            let pop = population(&sizes);
            let n = ((pop.len() as f64) * frac).floor().max(1.0) as usize;
            let a = stratified_sample(&pop, &spec(n, seed_a)).unwrap();
            let again = stratified_sample(&pop, &spec(n, seed_a)).unwrap();
            let b = stratified_sample(&pop, &spec(n, seed_b)).unwrap();
            prop_assert_eq!(a.len(), n);
            prop_assert_eq!(&a, &again);
            prop_assert_eq!(counts(&a), counts(&b));

            // a stratum more than one below another must be exhausted
            let quotas = allocate_quotas(&sizes, n);
            for (i, (&qi, &ci)) in quotas.iter().zip(&sizes).enumerate() {
                for (j, &qj) in quotas.iter().enumerate() {
                    if i != j && qi + 1 < qj {
                        prop_assert_eq!(qi, ci);
                    }
                }
            }

            let mut shuffled = pop.clone();
            shuffled.reverse();
            prop_assert_eq!(stratified_sample(&shuffled, &spec(n, seed_a)).unwrap(), a);
        }
    }
}
