//! CPLEX-LP text export.
//!
//! Byte-deterministic for a given program: variables and rows are
//! emitted in construction order, coefficients through the shortest
//! round-trip float formatter. All variables are integers, so every
//! name lands in the `Generals` section; default bounds [0, +inf)
//! match the model and need no `Bounds` section.

use super::{IntegerProgram, RowKind, VarKey};

const WRAP_COLUMN: usize = 76;

/// Vertiport ids reduced to LP-safe tokens. Ids that collide after
/// sanitizing (or sanitize to nothing) fall back to their index.
fn sanitized_ids(program: &IntegerProgram) -> Vec<String> {
    let mut out: Vec<String> = Vec::with_capacity(program.vertiports().len());
    for (index, id) in program.vertiports().iter().enumerate() {
        let mut clean: String = id
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect();
        if clean.is_empty() || out.contains(&clean) {
            clean = format!("v{index}");
        }
        out.push(clean);
    }
    out
}

pub(crate) fn variable_name(program: &IntegerProgram, key: VarKey) -> String {
    let ids = sanitized_ids(program);
    name_with_ids(&ids, key)
}

fn name_with_ids(ids: &[String], key: VarKey) -> String {
    match key {
        VarKey::Idle { i, k, t } => format!("n_{}_{}_{}", ids[i], k, t),
        VarKey::Flight { i, j, k, t } => format!("u_{}_{}_{}_{}", ids[i], ids[j], k, t),
        VarKey::Charge { i, x, y, t } => format!("c_{}_{}_{}_{}", ids[i], x, y, t),
    }
}

struct LineBuilder {
    out: String,
    line_len: usize,
}

impl LineBuilder {
    fn new() -> Self {
        Self { out: String::new(), line_len: 0 }
    }

    fn begin_line(&mut self, head: &str) {
        if !self.out.is_empty() {
            self.out.push('\n');
        }
        self.out.push(' ');
        self.out.push_str(head);
        self.line_len = 1 + head.len();
    }

    fn token(&mut self, token: &str) {
        if self.line_len + 1 + token.len() > WRAP_COLUMN {
            self.out.push_str("\n  ");
            self.line_len = 2 + token.len();
        } else {
            self.out.push(' ');
            self.line_len += 1 + token.len();
        }
        self.out.push_str(token);
    }

    /// `+ coef name` with unit coefficients elided; the leading term
    /// drops its plus sign.
    fn term(&mut self, coefficient: f64, name: &str, first: bool) {
        let magnitude = coefficient.abs();
        let signed = if coefficient < 0.0 { "-" } else { "+" };
        if !first {
            self.token(signed);
        } else if coefficient < 0.0 {
            self.token("-");
        }
        if (magnitude - 1.0).abs() > f64::EPSILON {
            self.token(&format!("{magnitude}"));
        }
        self.token(name);
    }
}

/// Renders the whole program as LP text.
pub fn export_lp(program: &IntegerProgram) -> String {
    let ids = sanitized_ids(program);
    let names: Vec<String> = program
        .variables()
        .iter()
        .map(|v| name_with_ids(&ids, v.key))
        .collect();

    let mut text = String::from("Minimize\n");
    let mut obj = LineBuilder::new();
    obj.begin_line("obj:");
    let mut first = true;
    for (var, name) in program.variables().iter().zip(&names) {
        if var.objective != 0.0 {
            obj.term(var.objective, name, first);
            first = false;
        }
    }
    if first {
        obj.token("0");
    }
    text.push_str(&obj.out);

    text.push_str("\nSubject To\n");
    let mut body = LineBuilder::new();
    for row in program.rows() {
        let (head, relation) = match &row.kind {
            RowKind::Balance { i, k, t } => {
                (format!("bal_{}_{}_{}:", ids[*i], k, t), "=")
            }
            RowKind::Demand { i, j, t } => {
                (format!("dem_{}_{}_{}:", ids[*i], ids[*j], t), ">=")
            }
        };
        body.begin_line(&head);
        let mut first = true;
        for &(var, coefficient) in &row.entries {
            body.term(coefficient, &names[var], first);
            first = false;
        }
        body.token(relation);
        body.token(&format!("{}", row.rhs));
    }
    text.push_str(&body.out);

    text.push_str("\nGenerals\n");
    for name in &names {
        text.push(' ');
        text.push_str(name);
        text.push('\n');
    }
    text.push_str("End\n");
    text
}

#[cfg(test)]
mod tests {
    use super::*;

    // Program construction lives in the parent module's tests; these
    // cover the text layer through a minimal real program.
    use crate::charging::ChargerModel;
    use crate::demand::FlightDemand;
    use crate::opt::{build_program, RouteTable};
    use crate::soc::SocLadder;
    use crate::timegrid::TimeGrid;

    fn sample_program(vertiports: &[&str]) -> IntegerProgram {
        let pairs = vec![
            (vertiports[0].to_string(), vertiports[1].to_string()),
            (vertiports[1].to_string(), vertiports[0].to_string()),
        ];
        let tau = RouteTable::constant(4, &pairs, 1);
        let kappa = RouteTable::constant(4, &pairs, 1);
        let grid = TimeGrid::new(1800, 4, 1).unwrap();
        let model = ChargerModel {
            capacity_kwh: 160.0,
            power_initial_kw: 320.0,
            power_final_kw: 320.0,
            knee_fraction: 0.2,
        };
        let timetable = model.build_timetable(SocLadder::new(2).unwrap(), grid).unwrap();
        let mut demand = FlightDemand::default();
        *demand
            .counts
            .entry((vertiports[0].to_string(), vertiports[1].to_string()))
            .or_default()
            .entry(2)
            .or_default() += 1;
        let names: Vec<String> = vertiports.iter().map(|s| s.to_string()).collect();
        build_program(&demand, &tau, &kappa, &timetable, 2, &names, 1e-5).unwrap()
    }

    #[test]
    fn sections_are_present_and_ordered() {
        let text = export_lp(&sample_program(&["A", "B"]));
        let minimize = text.find("Minimize").unwrap();
        let subject = text.find("Subject To").unwrap();
        let generals = text.find("Generals").unwrap();
        let end = text.find("End").unwrap();
        assert!(minimize < subject && subject < generals && generals < end);
        assert!(text.contains(" obj:"));
        assert!(text.contains(" dem_A_B_2:"));
        assert!(text.contains(">= 1"));
        assert!(text.contains("0.00001"));
        assert!(text.ends_with("End\n"));
    }

    #[test]
    fn export_is_byte_deterministic() {
        let program = sample_program(&["A", "B"]);
        assert_eq!(export_lp(&program), export_lp(&program));
    }

    #[test]
    fn hostile_ids_are_sanitized_without_collision() {
        let text = export_lp(&sample_program(&["SF-1", "SF 1"]));
        // Both ids sanitize to SF1; the second falls back to its index.
        assert!(text.contains("n_SF1_0_0"));
        assert!(text.contains("n_v1_0_0"));
    }

    #[test]
    fn lines_stay_narrow() {
        let text = export_lp(&sample_program(&["A", "B"]));
        for line in text.lines() {
            assert!(line.len() <= 80, "line too wide: {line}");
        }
    }
}
