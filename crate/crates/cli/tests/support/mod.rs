#![allow(dead_code)]

pub mod micro;
pub mod oracle;

use std::collections::BTreeSet;

use rationalizer_core::game::{ExtensiveForm, NodeId, StrategyId};

pub fn names(form: &ExtensiveForm, p: usize, set: &BTreeSet<StrategyId>) -> BTreeSet<String> {
    set.iter().map(|&s| form.strategy_name(p, s)).collect()
}

pub fn labels(form: &ExtensiveForm, zs: &BTreeSet<NodeId>) -> BTreeSet<String> {
    zs.iter().map(|&z| form.terminal_label(z).to_string()).collect()
}

pub fn set(xs: &[&str]) -> BTreeSet<String> {
    xs.iter().map(|s| s.to_string()).collect()
}

/// Prints the verdict line for one criterion and fails the test when it did not hold.
pub fn verdict(criterion: usize, ok: bool, detail: &str) {
    println!("criterion {criterion}: {} {detail}", if ok { "PASS" } else { "FAIL" });
    assert!(ok, "criterion {criterion} failed: {detail}");
}
