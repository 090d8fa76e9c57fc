use std::collections::HashMap;
use std::sync::Arc;

use super::AggregationMap;
use crate::cohort::{item_column_id, HourlyTensor};
use crate::Result;

pub fn group_column_id(group_id: u32) -> String {
    format!("group{group_id:05}")
}

/// Column ids of the aggregate representation, sorted.
pub(crate) fn group_columns(map: &AggregationMap) -> Vec<(String, usize)> {
    let mut cols: Vec<(String, usize)> = map
        .groups
        .iter()
        .enumerate()
        .map(|(i, g)| (group_column_id(g.group_id), i))
        .collect();
    cols.sort();
    cols
}

/// One column per group: the mean over member items observed in that hour of
/// `value * to_canonical_factor`. Items outside the map are dropped; members
/// missing from the tensor's vocabulary are skipped.
pub fn build_aggregate(tensor: &HourlyTensor, map: &AggregationMap) -> Result<HourlyTensor> {
    map.validate()?;
    let cols = group_columns(map);
    let ids: Arc<[String]> = cols.iter().map(|(id, _)| id.clone()).collect();
    let position: HashMap<&str, usize> = tensor
        .columns
        .iter()
        .enumerate()
        .map(|(i, c)| (c.as_str(), i))
        .collect();
    let members: Vec<Vec<(usize, f64)>> = cols
        .iter()
        .map(|(_, g)| {
            map.groups[*g]
                .members
                .iter()
                .filter_map(|(item, factor)| {
                    position
                        .get(item_column_id(*item).as_str())
                        .map(|&c| (c, *factor))
                })
                .collect()
        })
        .collect();
    let mut out = HourlyTensor::empty(tensor.stay_id, tensor.hours, ids);
    for h in 0..tensor.hours {
        for (g, mem) in members.iter().enumerate() {
            let (mut sum, mut n) = (0.0, 0u32);
            for &(c, factor) in mem {
                if let Some(v) = tensor.get(h, c) {
                    sum += v * factor;
                    n += 1;
                }
            }
            if n > 0 {
                out.set(h, g, sum / f64::from(n));
            }
        }
    }
    Ok(out)
}
