//! Tabular RCL files.
//!
//! A header line `# rcl paging n_states=N k_max=K` (or `registration`)
//! followed by one whitespace-separated row `i0 k v_0 ... v_{N-1}` per slot.
//! Paging values are per-state ranks, registration values are 0/1.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::model::{MotionModel, PagingOrder, PagingRcl, RegistrationRcl};

const PAGING: &str = "paging";
const REGISTRATION: &str = "registration";

pub fn write_paging_rcl<W: Write>(f: &PagingRcl, mut out: W) -> Result<()> {
    writeln!(out, "# rcl {PAGING} n_states={} k_max={}", f.n_states(), f.k_max())?;
    for i0 in 0..f.n_states() {
        for k in 1..=f.k_max() + 1 {
            let values: Vec<String> = f.order(i0, k).iter().map(|r| r.to_string()).collect();
            writeln!(out, "{i0} {k} {}", values.join(" "))?;
        }
    }
    Ok(())
}

pub fn write_registration_rcl<W: Write>(g: &RegistrationRcl, mut out: W) -> Result<()> {
    writeln!(out, "# rcl {REGISTRATION} n_states={} k_max={}", g.n_states(), g.k_max())?;
    for i0 in 0..g.n_states() {
        for k in 1..=g.k_max() {
            let values: Vec<&str> = g.decision(i0, k).iter().map(|&b| if b { "1" } else { "0" }).collect();
            writeln!(out, "{i0} {k} {}", values.join(" "))?;
        }
    }
    Ok(())
}

struct Table {
    rows: Vec<(usize, usize, Vec<u32>)>,
}

fn parse_err(line: usize, msg: impl std::fmt::Display) -> Error {
    Error::Parse(format!("line {line}: {msg}"))
}

fn read_table<R: BufRead>(model: &MotionModel, kind: &str, input: R) -> Result<Table> {
    let mut lines = input.lines().enumerate();
    let header = loop {
        match lines.next() {
            Some((_, line)) => {
                let line = line?;
                if !line.trim().is_empty() {
                    break line;
                }
            }
            None => return Err(Error::Parse("empty RCL file".into())),
        }
    };
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 5 || fields[0] != "#" || fields[1] != "rcl" {
        return Err(parse_err(1, format!("expected '# rcl <kind> n_states=N k_max=K', got '{header}'")));
    }
    if fields[2] != kind {
        return Err(parse_err(1, format!("expected a {kind} RCL, found {}", fields[2])));
    }
    let dim = |field: &str, key: &str| -> Result<usize> {
        field
            .strip_prefix(key)
            .and_then(|v| v.strip_prefix('='))
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| parse_err(1, format!("bad header field '{field}'")))
    };
    let n = dim(fields[3], "n_states")?;
    let k_max = dim(fields[4], "k_max")?;
    if n != model.n_states() || k_max != model.k_max() {
        return Err(Error::InvalidPolicy(format!(
            "RCL file is for n_states={n}, k_max={k_max}; model has n_states={}, k_max={}",
            model.n_states(),
            model.k_max()
        )));
    }
    let mut rows = Vec::new();
    for (idx, line) in lines {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let nums: Vec<u32> = line
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| parse_err(idx + 1, format!("'{t}' is not a nonnegative integer"))))
            .collect::<Result<_>>()?;
        if nums.len() != n + 2 {
            return Err(parse_err(idx + 1, format!("expected {} fields, found {}", n + 2, nums.len())));
        }
        rows.push((nums[0] as usize, nums[1] as usize, nums[2..].to_vec()));
    }
    Ok(Table { rows })
}

pub fn read_paging_rcl<R: BufRead>(model: &MotionModel, input: R) -> Result<PagingRcl> {
    let table = read_table(model, PAGING, input)?;
    let n = model.n_states();
    let slots = model.k_max() + 1;
    let mut seen = vec![false; n * slots];
    let mut f = PagingRcl::identity(model);
    for (i0, k, values) in table.rows {
        if i0 >= n || !(1..=slots).contains(&k) {
            return Err(Error::InvalidPolicy(format!("paging slot ({i0}, {k}) out of range")));
        }
        let order = PagingOrder::from_ranks(model, values)?;
        f.set(i0, k, &order);
        seen[i0 * slots + k - 1] = true;
    }
    if let Some(missing) = seen.iter().position(|&s| !s) {
        return Err(Error::InvalidPolicy(format!(
            "paging slot ({}, {}) missing",
            missing / slots,
            missing % slots + 1
        )));
    }
    Ok(f)
}

pub fn read_registration_rcl<R: BufRead>(model: &MotionModel, input: R) -> Result<RegistrationRcl> {
    let table = read_table(model, REGISTRATION, input)?;
    let n = model.n_states();
    let slots = model.k_max();
    let mut seen = vec![false; n * slots];
    let mut g = RegistrationRcl::never(model);
    for (i0, k, values) in table.rows {
        if i0 >= n || !(1..=slots).contains(&k) {
            return Err(Error::InvalidPolicy(format!("registration slot ({i0}, {k}) out of range")));
        }
        if values.iter().any(|&v| v > 1) {
            return Err(Error::InvalidPolicy(format!("registration slot ({i0}, {k}) has a non-binary entry")));
        }
        for (bit, &v) in g.decision_mut(i0, k).iter_mut().zip(&values) {
            *bit = v == 1;
        }
        seen[i0 * slots + k - 1] = true;
    }
    if let Some(missing) = seen.iter().position(|&s| !s) {
        return Err(Error::InvalidPolicy(format!(
            "registration slot ({}, {}) missing",
            missing / slots,
            missing % slots + 1
        )));
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_simple_example, CostParams};
    use crate::paging::derive_paging_rcl;

    fn model() -> MotionModel {
        build_simple_example(CostParams { lambda_p: 0.05, page_cost: 1.0, reg_cost: 0.04, beta: 0.9, k_max: 4 })
            .unwrap()
    }

    #[test]
    fn round_trip() {
        let m = model();
        let g = RegistrationRcl::hop_threshold(&m, 2);
        let f = derive_paging_rcl(&m, &g);
        let mut buf = Vec::new();
        write_paging_rcl(&f, &mut buf).unwrap();
        assert_eq!(read_paging_rcl(&m, buf.as_slice()).unwrap(), f);
        let mut buf = Vec::new();
        write_registration_rcl(&g, &mut buf).unwrap();
        assert_eq!(read_registration_rcl(&m, buf.as_slice()).unwrap(), g);
    }

    #[test]
    fn rejects_bad_files() {
        let m = model();
        let mut buf = Vec::new();
        write_registration_rcl(&RegistrationRcl::never(&m), &mut buf).unwrap();
        assert!(matches!(read_paging_rcl(&m, buf.as_slice()), Err(Error::Parse(_))));
        let text = String::from_utf8(buf).unwrap();
        let dropped: String = text.lines().take(3).map(|l| format!("{l}\n")).collect();
        assert!(matches!(read_registration_rcl(&m, dropped.as_bytes()), Err(Error::InvalidPolicy(_))));
        let bad = text.replacen("0 1 0 0 0 0 0", "0 1 0 2 0 0 0", 1);
        assert!(read_registration_rcl(&m, bad.as_bytes()).is_err());
        let other = text.replace("k_max=4", "k_max=5");
        assert!(matches!(read_registration_rcl(&m, other.as_bytes()), Err(Error::InvalidPolicy(_))));
        let f_text = "# rcl paging n_states=5 k_max=4\n0 1 1 1 2 3 3\n";
        assert!(read_paging_rcl(&m, f_text.as_bytes()).is_err());
    }
}
