//! Reader and writer for the QPLIB text format.
//!
//! A QPLIB file stores `1/2 x^T Q x + b^T x + q0` with the lower triangle of
//! `Q` listed as `i j value` (1-based). Constraints are two-sided,
//! `c_l <= 1/2 x^T Q^k x + b^k x <= c_u`. On load every stored coefficient
//! is halved to obtain the `x^T Q x` convention used internally, two-sided
//! rows are split into `<=` rows and maximization is negated.
//!
//! Everything after a `#` on a line is a comment. The trailing sections
//! (starting point, duals, names) are optional and ignored.

use super::{
    InstanceError, LinearRow, MiqcqpInstance, ObjectiveSense, QuadConstraint, QuadraticObjective,
    SymSparseMatrix,
};
use std::collections::BTreeMap;
use std::fmt::Write as _;

/// Replacement magnitude for infinite bounds of variables outside every `Q^k`.
pub const DEFAULT_BOUND: f64 = 1e7;

struct Cursor<'a> {
    lines: Vec<(usize, &'a str)>,
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(text: &'a str) -> Self {
        let lines = text
            .lines()
            .enumerate()
            .filter_map(|(i, l)| {
                let content = l.split('#').next().unwrap_or("").trim();
                (!content.is_empty()).then_some((i + 1, content))
            })
            .collect();
        Self { lines, pos: 0 }
    }

    fn last_line(&self) -> usize {
        self.lines.last().map_or(1, |l| l.0)
    }

    fn at_end(&self) -> bool {
        self.pos >= self.lines.len()
    }

    fn next(&mut self, what: &str) -> Result<(usize, &'a str), InstanceError> {
        let item = self.lines.get(self.pos).copied().ok_or_else(|| {
            InstanceError::parse(self.last_line(), format!("unexpected end of file, expected {what}"))
        })?;
        self.pos += 1;
        Ok(item)
    }

    fn tokens(&mut self, what: &str, count: usize) -> Result<(usize, Vec<&'a str>), InstanceError> {
        let (line, content) = self.next(what)?;
        let toks: Vec<&str> = content.split_whitespace().collect();
        if toks.len() < count {
            return Err(InstanceError::parse(
                line,
                format!("expected {count} fields for {what}, found {}", toks.len()),
            ));
        }
        Ok((line, toks))
    }

    fn usize(&mut self, what: &str) -> Result<(usize, usize), InstanceError> {
        let (line, t) = self.tokens(what, 1)?;
        let v = parse_usize(line, t[0], what)?;
        Ok((line, v))
    }

    fn real(&mut self, what: &str) -> Result<(usize, f64), InstanceError> {
        let (line, t) = self.tokens(what, 1)?;
        Ok((line, parse_real(line, t[0], what)?))
    }
}

fn parse_usize(line: usize, tok: &str, what: &str) -> Result<usize, InstanceError> {
    tok.parse::<usize>()
        .map_err(|_| InstanceError::parse(line, format!("invalid integer '{tok}' for {what}")))
}

fn parse_index(line: usize, tok: &str, limit: usize, what: &str) -> Result<usize, InstanceError> {
    let v = parse_usize(line, tok, what)?;
    if v == 0 || v > limit {
        return Err(InstanceError::parse(
            line,
            format!("{what} index {v} outside 1..={limit}"),
        ));
    }
    Ok(v - 1)
}

fn parse_real(line: usize, tok: &str, what: &str) -> Result<f64, InstanceError> {
    let v = tok
        .parse::<f64>()
        .map_err(|_| InstanceError::parse(line, format!("invalid number '{tok}' for {what}")))?;
    if v.is_nan() {
        return Err(InstanceError::parse(line, format!("NaN value for {what}")));
    }
    Ok(v)
}

fn finite_coef(line: usize, v: f64, what: &str) -> Result<f64, InstanceError> {
    if !v.is_finite() {
        return Err(InstanceError::parse(line, format!("non-finite coefficient in {what}")));
    }
    Ok(v)
}

/// A defaulted vector section together with the line each value came from.
fn read_vector(
    cur: &mut Cursor<'_>,
    dim: usize,
    what: &str,
) -> Result<(Vec<f64>, Vec<usize>), InstanceError> {
    let (dline, default) = cur.real(&format!("default {what}"))?;
    let mut vals = vec![default; dim];
    let mut lines = vec![dline; dim];
    let (_, count) = cur.usize(&format!("number of non-default {what}"))?;
    for _ in 0..count {
        let (line, t) = cur.tokens(what, 2)?;
        let i = parse_index(line, t[0], dim, what)?;
        vals[i] = parse_real(line, t[1], what)?;
        lines[i] = line;
    }
    Ok((vals, lines))
}

#[derive(Clone, Copy, PartialEq)]
enum VarCode {
    Continuous,
    Binary,
    Mixed,
    Integer,
    General,
}

/// Parses QPLIB text into a validated minimization instance.
pub fn parse_qplib(text: &str) -> Result<MiqcqpInstance, InstanceError> {
    let mut cur = Cursor::new(text);
    let (_, name) = cur.next("problem name")?;
    let name = name.split_whitespace().next().unwrap_or("").to_string();

    let (code_line, code) = cur.next("problem type")?;
    let code: Vec<char> = code.split_whitespace().next().unwrap_or("").chars().collect();
    if code.len() != 3 {
        return Err(InstanceError::parse(code_line, "problem type must have three characters"));
    }
    let obj_code = code[0];
    if !matches!(obj_code, 'L' | 'D' | 'C' | 'Q') {
        return Err(InstanceError::parse(code_line, format!("unknown objective type '{obj_code}'")));
    }
    let var_code = match code[1] {
        'C' => VarCode::Continuous,
        'B' => VarCode::Binary,
        'M' => VarCode::Mixed,
        'I' => VarCode::Integer,
        'G' => VarCode::General,
        other => {
            return Err(InstanceError::parse(code_line, format!("unknown variable type '{other}'")))
        }
    };
    let cons_code = code[2];
    if !matches!(cons_code, 'N' | 'B' | 'L' | 'D' | 'C' | 'Q') {
        return Err(InstanceError::parse(code_line, format!("unknown constraint type '{cons_code}'")));
    }

    let (sense_line, sense) = cur.next("objective sense")?;
    let sense = match sense.split_whitespace().next().unwrap_or("").to_ascii_lowercase().as_str() {
        "minimize" => ObjectiveSense::Minimize,
        "maximize" => ObjectiveSense::Maximize,
        other => {
            return Err(InstanceError::parse(sense_line, format!("unknown objective sense '{other}'")))
        }
    };
    let (_, n) = cur.usize("number of variables")?;
    let m = if matches!(cons_code, 'N' | 'B') {
        0
    } else {
        cur.usize("number of constraints")?.1
    };

    // objective
    let mut q0 = Vec::new();
    if obj_code != 'L' {
        let (_, count) = cur.usize("number of objective quadratic terms")?;
        for _ in 0..count {
            let (line, t) = cur.tokens("objective quadratic term", 3)?;
            let i = parse_index(line, t[0], n, "variable")?;
            let j = parse_index(line, t[1], n, "variable")?;
            let v = finite_coef(line, parse_real(line, t[2], "objective coefficient")?, "objective")?;
            q0.push((i, j, 0.5 * v));
        }
    }
    let (b0, b0_lines) = read_vector(&mut cur, n, "objective linear coefficient")?;
    for (v, &line) in b0.iter().zip(&b0_lines) {
        finite_coef(line, *v, "objective")?;
    }
    let (cline, constant) = cur.real("objective constant")?;
    finite_coef(cline, constant, "objective constant")?;

    // constraints
    let mut qk: Vec<Vec<(usize, usize, f64)>> = vec![Vec::new(); m];
    let mut ak: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); m];
    if m > 0 {
        if matches!(cons_code, 'D' | 'C' | 'Q') {
            let (_, count) = cur.usize("number of constraint quadratic terms")?;
            for _ in 0..count {
                let (line, t) = cur.tokens("constraint quadratic term", 4)?;
                let k = parse_index(line, t[0], m, "constraint")?;
                let i = parse_index(line, t[1], n, "variable")?;
                let j = parse_index(line, t[2], n, "variable")?;
                let v = finite_coef(line, parse_real(line, t[3], "coefficient")?, "constraint")?;
                qk[k].push((i, j, 0.5 * v));
            }
        }
        let (_, count) = cur.usize("number of constraint linear terms")?;
        for _ in 0..count {
            let (line, t) = cur.tokens("constraint linear term", 3)?;
            let k = parse_index(line, t[0], m, "constraint")?;
            let i = parse_index(line, t[1], n, "variable")?;
            let v = finite_coef(line, parse_real(line, t[2], "coefficient")?, "constraint")?;
            *ak[k].entry(i).or_insert(0.0) += v;
        }
    }
    let (inf_line, infinity) = cur.real("infinity value")?;
    if !(infinity > 0.0) {
        return Err(InstanceError::parse(inf_line, "infinity value must be positive"));
    }
    let is_inf = |v: f64| v.abs() >= infinity;

    let (cl, cu) = if m > 0 {
        let (cl, _) = read_vector(&mut cur, m, "constraint lower bound")?;
        let (cu, _) = read_vector(&mut cur, m, "constraint upper bound")?;
        (cl, cu)
    } else {
        (Vec::new(), Vec::new())
    };

    let (mut lower, lower_lines, mut upper, upper_lines) = if var_code == VarCode::Binary {
        (vec![0.0; n], vec![0; n], vec![1.0; n], vec![0; n])
    } else {
        let (l, ll) = read_vector(&mut cur, n, "variable lower bound")?;
        let (u, ul) = read_vector(&mut cur, n, "variable upper bound")?;
        (l, ll, u, ul)
    };

    let mut integer = vec![false; n];
    let mut binary = vec![false; n];
    match var_code {
        VarCode::Continuous => {}
        VarCode::Binary => binary.iter_mut().for_each(|b| *b = true),
        VarCode::Integer => integer.iter_mut().for_each(|b| *b = true),
        VarCode::Mixed | VarCode::General => {
            let (types, lines) = read_vector(&mut cur, n, "variable type")?;
            for j in 0..n {
                match types[j] {
                    t if t == 0.0 => {}
                    t if t == 1.0 => integer[j] = true,
                    t if t == 2.0 => binary[j] = true,
                    t => {
                        return Err(InstanceError::parse(lines[j], format!("unknown variable type {t}")))
                    }
                }
            }
        }
    }
    // trailing optional sections are ignored
    let _ = cur.at_end();

    let obj_q = SymSparseMatrix::from_triplets(n, q0);
    let cons_q: Vec<SymSparseMatrix> = qk
        .into_iter()
        .map(|t| SymSparseMatrix::from_triplets(n, t))
        .collect();
    let mut in_quadratic = vec![false; n];
    for mtx in std::iter::once(&obj_q).chain(cons_q.iter()) {
        for j in mtx.support() {
            in_quadratic[j] = true;
        }
    }

    for j in 0..n {
        if binary[j] {
            integer[j] = true;
            lower[j] = if is_inf(lower[j]) { 0.0 } else { lower[j].max(0.0) };
            upper[j] = if is_inf(upper[j]) { 1.0 } else { upper[j].min(1.0) };
        }
        for (bound, line, sign) in [
            (&mut lower[j], lower_lines[j], -1.0),
            (&mut upper[j], upper_lines[j], 1.0),
        ] {
            if is_inf(*bound) || !bound.is_finite() {
                if integer[j] {
                    return Err(InstanceError::parse(
                        line,
                        format!("integer variable {} has no finite bound", j + 1),
                    ));
                }
                if in_quadratic[j] {
                    return Err(InstanceError::parse(
                        line,
                        format!("continuous variable {} appears in a quadratic term but is unbounded", j + 1),
                    ));
                }
                log::warn!("variable {} unbounded, using {:e}", j + 1, sign * DEFAULT_BOUND);
                *bound = sign * DEFAULT_BOUND;
            }
        }
        if integer[j] {
            lower[j] = (lower[j] - 1e-9).ceil();
            upper[j] = (upper[j] + 1e-9).floor();
        }
        if lower[j] > upper[j] {
            return Err(InstanceError::parse(
                upper_lines[j].max(lower_lines[j]),
                format!("variable {} has empty domain [{}, {}]", j + 1, lower[j], upper[j]),
            ));
        }
    }

    let sign = match sense {
        ObjectiveSense::Minimize => 1.0,
        ObjectiveSense::Maximize => -1.0,
    };
    let objective = QuadraticObjective {
        q: obj_q.scaled(sign),
        a: b0.iter().map(|v| sign * v).collect(),
        constant: sign * constant,
    };

    let mut quad_constraints = Vec::new();
    let mut linear = Vec::new();
    for k in 0..m {
        let a_sparse: Vec<(usize, f64)> = ak[k]
            .iter()
            .filter(|&(_, &v)| v != 0.0)
            .map(|(&j, &v)| (j, v))
            .collect();
        let sides = [(cu[k], 1.0), (cl[k], -1.0)];
        for (rhs, s) in sides {
            if is_inf(rhs) {
                continue;
            }
            if cons_q[k].is_empty() {
                linear.push(LinearRow {
                    coeffs: a_sparse.iter().map(|&(j, v)| (j, s * v)).collect(),
                    rhs: s * rhs,
                });
            } else {
                let mut a = vec![0.0; n];
                for &(j, v) in &a_sparse {
                    a[j] = s * v;
                }
                quad_constraints.push(QuadConstraint {
                    q: cons_q[k].scaled(s),
                    a,
                    rhs: s * rhs,
                });
            }
        }
    }

    let inst = MiqcqpInstance {
        name,
        n,
        objective,
        quad_constraints,
        linear,
        lower,
        upper,
        integer,
        sense,
    };
    inst.validate()?;
    Ok(inst)
}

fn num(v: f64) -> String {
    format!("{v:?}")
}

/// Writes an instance as QPLIB text.
///
/// Every internal row becomes a one-sided constraint; quadratic rows come
/// first. Parsing the output reproduces the instance exactly.
pub fn write_qplib(inst: &MiqcqpInstance) -> String {
    let n = inst.n;
    let mut out = String::new();
    let sign = match inst.sense {
        ObjectiveSense::Minimize => 1.0,
        ObjectiveSense::Maximize => -1.0,
    };
    let all_binary = (0..n).all(|j| inst.is_binary(j));
    let all_integer = inst.integer.iter().all(|&b| b);
    let none_integer = inst.integer.iter().all(|&b| !b);
    let obj_code = if inst.objective.q.is_empty() { 'L' } else { 'Q' };
    let var_code = if n > 0 && all_binary {
        'B'
    } else if none_integer {
        'C'
    } else if all_integer {
        'I'
    } else {
        'G'
    };
    let m1 = inst.m1();
    let m = m1 + inst.m2();
    let cons_code = if m1 > 0 {
        'Q'
    } else if m > 0 {
        'L'
    } else {
        'B'
    };
    let name = if inst.name.trim().is_empty() { "unnamed" } else { inst.name.trim() };
    let _ = writeln!(out, "{} # problem name", name.split_whitespace().next().unwrap());
    let _ = writeln!(out, "{obj_code}{var_code}{cons_code} # problem type");
    let _ = writeln!(
        out,
        "{} # objective sense",
        match inst.sense {
            ObjectiveSense::Minimize => "minimize",
            ObjectiveSense::Maximize => "maximize",
        }
    );
    let _ = writeln!(out, "{n} # number of variables");
    if m > 0 {
        let _ = writeln!(out, "{m} # number of constraints");
    }
    if obj_code != 'L' {
        let e = inst.objective.q.entries();
        let _ = writeln!(out, "{} # number of quadratic terms in objective", e.len());
        for &(r, c, v) in e {
            let _ = writeln!(out, "{} {} {}", c + 1, r + 1, num(2.0 * sign * v));
        }
    }
    let nz: Vec<(usize, f64)> = inst
        .objective
        .a
        .iter()
        .enumerate()
        .filter(|(_, &v)| v != 0.0)
        .map(|(j, &v)| (j, sign * v))
        .collect();
    let _ = writeln!(out, "0.0 # default value for linear coefficients in objective");
    let _ = writeln!(out, "{} # number of non-default linear coefficients in objective", nz.len());
    for (j, v) in nz {
        let _ = writeln!(out, "{} {}", j + 1, num(v));
    }
    let _ = writeln!(out, "{} # objective constant", num(sign * inst.objective.constant));

    if m > 0 {
        if m1 > 0 {
            let total: usize = inst.quad_constraints.iter().map(|c| c.q.nnz()).sum();
            let _ = writeln!(out, "{total} # number of quadratic terms in all constraints");
            for (k, c) in inst.quad_constraints.iter().enumerate() {
                for &(r, cc, v) in c.q.entries() {
                    let _ = writeln!(out, "{} {} {} {}", k + 1, cc + 1, r + 1, num(2.0 * v));
                }
            }
        }
        let mut lin_terms = Vec::new();
        for (k, c) in inst.quad_constraints.iter().enumerate() {
            for (j, &v) in c.a.iter().enumerate() {
                if v != 0.0 {
                    lin_terms.push((k, j, v));
                }
            }
        }
        for (k, r) in inst.linear.iter().enumerate() {
            let mut row: BTreeMap<usize, f64> = BTreeMap::new();
            for &(j, v) in &r.coeffs {
                *row.entry(j).or_insert(0.0) += v;
            }
            for (j, v) in row {
                if v != 0.0 {
                    lin_terms.push((m1 + k, j, v));
                }
            }
        }
        let _ = writeln!(out, "{} # number of linear terms in all constraints", lin_terms.len());
        for (k, j, v) in lin_terms {
            let _ = writeln!(out, "{} {} {}", k + 1, j + 1, num(v));
        }
    }
    let _ = writeln!(out, "1e30 # value for infinity");
    if m > 0 {
        let _ = writeln!(out, "-1e30 # default left-hand-side value");
        let _ = writeln!(out, "0 # number of non-default left-hand-sides");
        let rhs: Vec<f64> = inst
            .quad_constraints
            .iter()
            .map(|c| c.rhs)
            .chain(inst.linear.iter().map(|r| r.rhs))
            .collect();
        let nz: Vec<(usize, f64)> = rhs.into_iter().enumerate().filter(|(_, v)| *v != 0.0).collect();
        let _ = writeln!(out, "0.0 # default right-hand-side value");
        let _ = writeln!(out, "{} # number of non-default right-hand-sides", nz.len());
        for (k, v) in nz {
            let _ = writeln!(out, "{} {}", k + 1, num(v));
        }
    }
    if var_code != 'B' {
        for (label, vals) in [("lower", &inst.lower), ("upper", &inst.upper)] {
            let nz: Vec<(usize, f64)> = vals
                .iter()
                .enumerate()
                .filter(|(_, &v)| v != 0.0)
                .map(|(j, &v)| (j, v))
                .collect();
            let _ = writeln!(out, "0.0 # default variable {label} bound value");
            let _ = writeln!(out, "{} # number of non-default variable {label} bounds", nz.len());
            for (j, v) in nz {
                let _ = writeln!(out, "{} {}", j + 1, num(v));
            }
        }
    }
    if var_code == 'G' {
        let ints: Vec<usize> = inst.integer_indices();
        let _ = writeln!(out, "0 # default variable type is continuous");
        let _ = writeln!(out, "{} # number of non-default variable types", ints.len());
        for j in ints {
            let _ = writeln!(out, "{} 1", j + 1);
        }
    }
    let _ = writeln!(out, "0.0 # default variable primal value in starting point");
    let _ = writeln!(out, "0 # number of non-default variable primal values in starting point");
    if m > 0 {
        let _ = writeln!(out, "0.0 # default constraint dual value in starting point");
        let _ = writeln!(out, "0 # number of non-default constraint dual values in starting point");
    }
    let _ = writeln!(out, "0.0 # default variable bound dual value in starting point");
    let _ = writeln!(out, "0 # number of non-default variable bound dual values in starting point");
    let _ = writeln!(out, "0 # number of non-default variable names");
    let _ = writeln!(out, "0 # number of non-default constraint names");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{classify, ProblemClass};

    const TWO_VAR: &str = "\
tiny # name
QBB # binary box
minimize
2
1
1 1 2.0
0.0
0
0.0
1e30
";

    #[test]
    fn single_square_term() {
        let inst = parse_qplib(TWO_VAR).unwrap();
        assert_eq!(inst.n, 2);
        assert_eq!(inst.objective.q.to_dense(), nalgebra::DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]));
        assert_eq!((inst.m1(), inst.m2()), (0, 0));
        assert!(inst.integer.iter().all(|&b| b));
    }

    const ONE_QUAD_CON: &str = "\
qc
QCQ
minimize
2
1
0
0.0
0
0.0
2
1 1 1 2.0
1 2 2 2.0
0
1e30
-1e30
0
4.0
0
0.0
0
3.0
0
";

    #[test]
    fn quadratic_constraint_counts() {
        let inst = parse_qplib(ONE_QUAD_CON).unwrap();
        assert_eq!(inst.m1(), 1);
        assert_eq!(classify(&inst), ProblemClass::Miqcp);
        assert_eq!(inst.quad_constraints[0].q, SymSparseMatrix::identity(2));
        assert_eq!(inst.quad_constraints[0].rhs, 4.0);
    }

    const OFF_DIAGONAL: &str = "\
offdiag
QGL
maximize
3
2
1
2 1 3.0
0.0
1
3 -1.5
2.5
3
1 1 1.0
1 2 1.0
2 3 1.0
1e30
-1e30
1
2 1.0
10
1
1 4.0
-1.0
0
2.0
1
3 5.0
0
2
1 1
2 1
";

    #[test]
    fn off_diagonal_halved_and_round_trip() {
        let inst = parse_qplib(OFF_DIAGONAL).unwrap();
        // maximize is stored negated: Q_12 = -(3/2)
        let d = inst.objective.q.to_dense();
        assert_eq!(d[(0, 1)], -1.5);
        assert_eq!(d[(1, 0)], -1.5);
        assert_eq!(inst.objective.a, vec![0.0, 0.0, 1.5]);
        assert_eq!(inst.objective.constant, -2.5);
        assert_eq!(inst.sense, ObjectiveSense::Maximize);
        // row 1: x1 + x2 <= 4 ; row 2: 1 <= x3 <= 10
        assert_eq!(inst.m2(), 3);
        assert_eq!(inst.integer, vec![true, true, false]);
        assert_eq!(inst.lower, vec![-1.0, -1.0, -1.0]);
        assert_eq!(inst.upper, vec![2.0, 2.0, 5.0]);
        let text = write_qplib(&inst);
        let again = parse_qplib(&text).unwrap();
        assert_eq!(again, inst);
        assert_eq!(parse_qplib(&write_qplib(&again)).unwrap(), again);
    }

    #[test]
    fn reports_bad_header() {
        let bad = TWO_VAR.replace("QBB", "QXB");
        match parse_qplib(&bad) {
            Err(InstanceError::Parse { line, message }) => {
                assert_eq!(line, 2);
                assert!(message.contains("variable type"));
            }
            other => panic!("unexpected {other:?}"),
        }
        let bad = TWO_VAR.replace("minimize", "minimise");
        assert!(matches!(parse_qplib(&bad), Err(InstanceError::Parse { line: 3, .. })));
    }

    #[test]
    fn rejects_non_finite_coefficients() {
        let bad = TWO_VAR.replace("1 1 2.0", "1 1 inf");
        assert!(matches!(parse_qplib(&bad), Err(InstanceError::Parse { line: 6, .. })));
        let bad = TWO_VAR.replace("1 1 2.0", "1 1 NaN");
        assert!(matches!(parse_qplib(&bad), Err(InstanceError::Parse { line: 6, .. })));
    }

    #[test]
    fn rejects_unbounded_integer() {
        let text = "\
ub
LIB
minimize
1
0.0
0
0.0
1e30
0.0
0
1e30
0
";
        match parse_qplib(text) {
            Err(InstanceError::Parse { line, message }) => {
                assert_eq!(line, 11);
                assert!(message.contains("integer"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_type_code_in_types_section() {
        let bad = OFF_DIAGONAL.replace("2 1\n", "2 7\n");
        assert!(matches!(parse_qplib(&bad), Err(InstanceError::Parse { .. })));
    }

    #[test]
    fn unbounded_linear_only_continuous_is_replaced() {
        let text = "\
lin
LML
minimize
2
1
0.0
1
2 1.0
0.0
1
1 2 1.0
1e30
-1e30
0
5.0
0
0.0
1
2 -1e30
0.0
1
2 1e30
0
0
";
        let inst = parse_qplib(text).unwrap();
        assert_eq!(inst.lower[1], -DEFAULT_BOUND);
        assert_eq!(inst.upper[1], DEFAULT_BOUND);
        let quad = text.replace("LML", "QML").replacen("0.0\n1\n2 1.0", "1\n2 2 1.0\n0.0\n1\n2 1.0", 1);
        assert!(matches!(parse_qplib(&quad), Err(InstanceError::Parse { .. })));
    }
}
