//! Line-oriented netlist text format.
//!
//! ```text
//! # comment
//! .model full_adder
//! .inputs a b cin
//! .outputs s cout
//! x1 = XOR(a, b)
//! q = DFF(d)
//! one = CONST1()
//! .end
//! ```
//!
//! Grammar (one statement per line, `#` starts a comment):
//!
//! ```text
//! line      := directive | gate | switchbox | <empty>
//! directive := ".model" ident | ".inputs" ident* | ".outputs" ident* | ".end"
//! gate      := ident "=" KIND "(" [ident ("," ident)*] ")"
//! switchbox := ident "=" "SB2" "(" ident "," ident "->" ident "," ident ")"
//! ident     := [A-Za-z0-9_.$:\[\]]+
//! ```
//!
//! `.inputs`/`.outputs` may repeat; their operands accumulate in order.
//! Switchbox lines are only accepted by the obfuscated-netlist reader.
//! The canonical form written by [`serialize_netlist`] is a fixed point of
//! parse followed by serialize.

use std::fmt::Write as _;

use super::{GateKind, Netlist, NetlistBuilder, NetlistError};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParsedLine {
    Model(String),
    Inputs(Vec<String>),
    Outputs(Vec<String>),
    Gate {
        output: String,
        kind: GateKind,
        inputs: Vec<String>,
    },
    Switchbox {
        name: String,
        inputs: (String, String),
        outputs: (String, String),
    },
    End,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceLine {
    pub line: usize,
    pub stmt: ParsedLine,
}

fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || matches!(c, '_' | '.' | '$' | ':' | '[' | ']')
}

struct Cursor<'a> {
    text: &'a str,
    pos: usize,
    line: usize,
}

impl<'a> Cursor<'a> {
    fn err(&self, message: impl Into<String>) -> NetlistError {
        NetlistError::Syntax {
            line: self.line,
            column: self.pos + 1,
            message: message.into(),
        }
    }

    fn skip_ws(&mut self) {
        while let Some(c) = self.text[self.pos..].chars().next() {
            if c.is_whitespace() {
                self.pos += c.len_utf8();
            } else {
                break;
            }
        }
    }

    fn at_end(&mut self) -> bool {
        self.skip_ws();
        self.pos >= self.text.len()
    }

    fn ident(&mut self) -> Result<String, NetlistError> {
        self.skip_ws();
        let start = self.pos;
        while let Some(c) = self.text[self.pos..].chars().next() {
            if is_ident_char(c) {
                self.pos += c.len_utf8();
            } else {
                break;
            }
        }
        if self.pos == start {
            return Err(self.err("expected identifier"));
        }
        Ok(self.text[start..self.pos].to_string())
    }

    fn expect(&mut self, token: &str) -> Result<(), NetlistError> {
        self.skip_ws();
        if self.text[self.pos..].starts_with(token) {
            self.pos += token.len();
            Ok(())
        } else {
            Err(self.err(format!("expected `{token}`")))
        }
    }

    fn peek_is(&mut self, token: &str) -> bool {
        self.skip_ws();
        self.text[self.pos..].starts_with(token)
    }
}

/// Tokenizes netlist source into statements without resolving wires.
pub fn parse_lines(text: &str) -> Result<Vec<SourceLine>, NetlistError> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let body = match raw.find('#') {
            Some(p) => &raw[..p],
            None => raw,
        };
        let mut cur = Cursor {
            text: body,
            pos: 0,
            line: line_no,
        };
        if cur.at_end() {
            continue;
        }
        let stmt = if cur.peek_is(".") {
            cur.expect(".")?;
            let directive_pos = cur.pos;
            let directive = cur.ident()?;
            let mut operands = Vec::new();
            while !cur.at_end() {
                operands.push(cur.ident()?);
            }
            match directive.as_str() {
                "model" => {
                    if operands.len() != 1 {
                        return Err(cur.err("`.model` takes exactly one name"));
                    }
                    ParsedLine::Model(operands.remove(0))
                }
                "inputs" => ParsedLine::Inputs(operands),
                "outputs" => ParsedLine::Outputs(operands),
                "end" => ParsedLine::End,
                other => {
                    cur.pos = directive_pos;
                    return Err(cur.err(format!("unknown directive `.{other}`")));
                }
            }
        } else {
            let output = cur.ident()?;
            cur.expect("=")?;
            let kind_pos = {
                cur.skip_ws();
                cur.pos
            };
            let kind_name = cur.ident()?;
            cur.expect("(")?;
            if kind_name == "SB2" {
                let x = cur.ident()?;
                cur.expect(",")?;
                let y = cur.ident()?;
                cur.expect("->")?;
                let z = cur.ident()?;
                cur.expect(",")?;
                let w = cur.ident()?;
                cur.expect(")")?;
                if !cur.at_end() {
                    return Err(cur.err("trailing characters"));
                }
                out.push(SourceLine {
                    line: line_no,
                    stmt: ParsedLine::Switchbox {
                        name: output,
                        inputs: (x, y),
                        outputs: (z, w),
                    },
                });
                continue;
            }
            let kind = match GateKind::from_name(&kind_name) {
                Some(k) => k,
                None => {
                    cur.pos = kind_pos;
                    return Err(cur.err(format!("unknown gate kind `{kind_name}`")));
                }
            };
            let mut inputs = Vec::new();
            if !cur.peek_is(")") {
                loop {
                    inputs.push(cur.ident()?);
                    if cur.peek_is(",") {
                        cur.expect(",")?;
                    } else {
                        break;
                    }
                }
            }
            cur.expect(")")?;
            if !cur.at_end() {
                return Err(cur.err("trailing characters"));
            }
            ParsedLine::Gate {
                output,
                kind,
                inputs,
            }
        };
        out.push(SourceLine { line: line_no, stmt });
    }
    Ok(out)
}

/// Parses netlist source text into a validated [`Netlist`].
pub fn parse_netlist(text: &str) -> Result<Netlist, NetlistError> {
    let lines = parse_lines(text)?;
    let mut b = NetlistBuilder::new("netlist");
    let mut outputs = Vec::new();
    for SourceLine { line, stmt } in lines {
        match stmt {
            ParsedLine::Model(name) => b.set_name(name),
            ParsedLine::Inputs(names) => {
                for n in names {
                    b.input(&n);
                }
            }
            ParsedLine::Outputs(names) => outputs.extend(names),
            ParsedLine::Gate {
                output,
                kind,
                inputs,
            } => {
                let refs: Vec<&str> = inputs.iter().map(String::as_str).collect();
                b.gate_named(kind, &output, &refs);
            }
            ParsedLine::Switchbox { .. } => {
                return Err(NetlistError::Syntax {
                    line,
                    column: 1,
                    message: "switchbox pseudo-gate in a plain netlist".into(),
                })
            }
            ParsedLine::End => break,
        }
    }
    for o in outputs {
        b.output_named(&o);
    }
    b.build()
}

/// Writes the canonical text form.
pub fn serialize_netlist(n: &Netlist) -> String {
    let mut s = String::new();
    write_header(&mut s, n);
    for g in n.gates() {
        write_gate(&mut s, n, g);
    }
    s.push_str(".end\n");
    s
}

pub(crate) fn write_header(s: &mut String, n: &Netlist) {
    let _ = writeln!(s, ".model {}", n.name());
    s.push_str(".inputs");
    for &w in n.inputs() {
        s.push(' ');
        s.push_str(n.wire_name(w));
    }
    s.push('\n');
    s.push_str(".outputs");
    for &w in n.outputs() {
        s.push(' ');
        s.push_str(n.wire_name(w));
    }
    s.push('\n');
}

pub(crate) fn write_gate(s: &mut String, n: &Netlist, g: &super::Gate) {
    let ins: Vec<&str> = g.inputs.iter().map(|&w| n.wire_name(w)).collect();
    let _ = writeln!(s, "{} = {}({})", n.wire_name(g.output), g.kind, ins.join(", "));
}

#[cfg(test)]
mod tests {
    use super::super::fixtures::{full_adder, FULL_ADDER};
    use super::*;

    #[test]
    fn full_adder_has_five_gates() {
        let n = full_adder();
        assert_eq!(n.gates().len(), 5);
        assert_eq!(n.num_inputs(), 3);
        assert_eq!(n.num_outputs(), 2);
        assert_eq!(n.name(), "full_adder");
    }

    #[test]
    fn single_buffer() {
        let n = parse_netlist(".inputs a\n.outputs y\ny = BUF(a)\n").unwrap();
        assert_eq!(n.gates().len(), 1);
    }

    #[test]
    fn canonical_form_is_fixed_point() {
        let once = serialize_netlist(&full_adder());
        let twice = serialize_netlist(&parse_netlist(&once).unwrap());
        assert_eq!(once, twice);
        assert!(FULL_ADDER.contains("x1 = XOR(a, b)"));
    }

    #[test]
    fn each_violation_has_its_own_error_kind() {
        let multi = ".inputs a b\n.outputs y\ny = AND(a, b)\ny = OR(a, b)\n";
        assert!(matches!(parse_netlist(multi), Err(NetlistError::MultipleDrivers { wire }) if wire == "y"));

        let undriven = ".inputs a\n.outputs y\ny = AND(a, ghost)\n";
        assert!(matches!(parse_netlist(undriven), Err(NetlistError::Undriven { wire }) if wire == "ghost"));

        let cyc = ".inputs a\n.outputs y\ny = AND(a, z)\nz = NOT(y)\n";
        assert!(matches!(parse_netlist(cyc), Err(NetlistError::CombinationalCycle { .. })));

        let arity = ".inputs a b\n.outputs y\ny = NOT(a, b)\n";
        assert!(matches!(parse_netlist(arity), Err(NetlistError::Arity { .. })));

        let syntax = ".inputs a\n.outputs y\ny = FROB(a)\n";
        match parse_netlist(syntax) {
            Err(NetlistError::Syntax { line, column, .. }) => {
                assert_eq!(line, 3);
                assert_eq!(column, 5);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_paren_reports_column() {
        match parse_netlist(".inputs a b\ny = AND(a, b\n") {
            Err(NetlistError::Syntax { line: 2, column, .. }) => assert_eq!(column, 13),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn constants_take_no_inputs() {
        let n = parse_netlist(".inputs a\n.outputs y z\ny = CONST1()\nz = BUF(a)\n").unwrap();
        assert_eq!(n.gates()[0].kind, GateKind::Const1);
        let text = serialize_netlist(&n);
        assert!(text.contains("y = CONST1()"));
    }

    #[test]
    fn switchbox_lines_rejected_in_plain_netlist() {
        let t = ".inputs a b\n.outputs z\nsb0 = SB2(a, b -> z, w)\n";
        assert!(matches!(parse_netlist(t), Err(NetlistError::Syntax { .. })));
        let lines = parse_lines(t).unwrap();
        assert!(matches!(lines[2].stmt, ParsedLine::Switchbox { .. }));
    }
}
