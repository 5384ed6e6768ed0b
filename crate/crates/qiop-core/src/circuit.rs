//! Boolean circuits over {AND, XOR, NOT, CONST0, CONST1} with a single
//! output bit, plus their arithmetization as GF(2) constraints that are
//! affine in the wire assignment z and quadratic through z⊗z.
//!
//! Wire numbering: inputs occupy wires 0..inputs, gate g writes wire
//! inputs + g. Operand indices must precede the gate's own wire, so the
//! gate list is a topological order by construction.

use crate::f2::BitVec;
use serde::{Deserialize, Serialize};
use std::fmt;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CircuitError {
    OperandOutOfRange { gate: usize, operand: usize },
    OutputOutOfRange { output: usize, wires: usize },
    InputLength { expected: usize, got: usize },
}

impl fmt::Display for CircuitError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CircuitError::OperandOutOfRange { gate, operand } => {
                write!(f, "gate {gate} references operand wire {operand} at or past itself")
            }
            CircuitError::OutputOutOfRange { output, wires } => {
                write!(f, "output wire {output} out of range ({wires} wires)")
            }
            CircuitError::InputLength { expected, got } => {
                write!(f, "input of length {got}, circuit expects {expected}")
            }
        }
    }
}

impl std::error::Error for CircuitError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", content = "args", rename_all = "UPPERCASE")]
pub enum GateOp {
    And(usize, usize),
    Xor(usize, usize),
    Not(usize),
    Const0,
    Const1,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BooleanCircuit {
    pub inputs: usize,
    pub gates: Vec<GateOp>,
    pub output: usize,
}

/// One GF(2) constraint ⟨lin, z⟩ ⊕ Σ_{(i,j)∈quad} z_i z_j ⊕ cst = 0.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Constraint {
    pub lin: BitVec,
    pub quad: Vec<(usize, usize)>,
    pub cst: u8,
}

impl Constraint {
    /// The quadratic part as a vector over F_2^{v²}: coordinate i·v + j.
    pub fn quad_vec(&self, v: usize) -> BitVec {
        let mut q = BitVec::zeros(v * v);
        for &(i, j) in &self.quad {
            q.flip(i * v + j);
        }
        q
    }

    pub fn eval(&self, z: &BitVec) -> u8 {
        let mut acc = self.lin.inner(z).expect("constraint width") ^ self.cst;
        for &(i, j) in &self.quad {
            acc ^= z.get(i) & z.get(j);
        }
        acc
    }
}

impl BooleanCircuit {
    pub fn num_wires(&self) -> usize {
        self.inputs + self.gates.len()
    }

    pub fn validate(&self) -> Result<(), CircuitError> {
        for (g, gate) in self.gates.iter().enumerate() {
            let wire = self.inputs + g;
            let operands: &[usize] = match gate {
                GateOp::And(a, b) | GateOp::Xor(a, b) => &[*a, *b][..],
                GateOp::Not(a) => &[*a][..],
                GateOp::Const0 | GateOp::Const1 => &[][..],
            };
            let operands = operands.to_vec();
            for op in operands {
                if op >= wire {
                    return Err(CircuitError::OperandOutOfRange { gate: g, operand: op });
                }
            }
        }
        if self.output >= self.num_wires() {
            return Err(CircuitError::OutputOutOfRange {
                output: self.output,
                wires: self.num_wires(),
            });
        }
        Ok(())
    }

    /// Evaluates every wire on the given input.
    pub fn wires(&self, y: &BitVec) -> Result<BitVec, CircuitError> {
        if y.len() != self.inputs {
            return Err(CircuitError::InputLength {
                expected: self.inputs,
                got: y.len(),
            });
        }
        let mut z = BitVec::zeros(self.num_wires());
        for i in 0..self.inputs {
            z.set(i, y.get(i));
        }
        for (g, gate) in self.gates.iter().enumerate() {
            let bit = match gate {
                GateOp::And(a, b) => z.get(*a) & z.get(*b),
                GateOp::Xor(a, b) => z.get(*a) ^ z.get(*b),
                GateOp::Not(a) => z.get(*a) ^ 1,
                GateOp::Const0 => 0,
                GateOp::Const1 => 1,
            };
            z.set(self.inputs + g, bit);
        }
        Ok(z)
    }

    pub fn eval(&self, y: &BitVec) -> Result<u8, CircuitError> {
        Ok(self.wires(y)?.get(self.output))
    }

    /// Gate constraints plus the output-is-one constraint, in gate order.
    /// A wire assignment z extends a satisfying input iff every constraint
    /// evaluates to 0.
    pub fn constraints(&self) -> Vec<Constraint> {
        let v = self.num_wires();
        let unit = |i: usize| BitVec::unit(v, i);
        let mut out = Vec::with_capacity(self.gates.len() + 1);
        for (g, gate) in self.gates.iter().enumerate() {
            let w = self.inputs + g;
            let c = match gate {
                GateOp::And(a, b) => Constraint {
                    lin: unit(w),
                    quad: vec![(*a, *b)],
                    cst: 0,
                },
                GateOp::Xor(a, b) => Constraint {
                    lin: unit(w).xor(&unit(*a)).unwrap().xor(&unit(*b)).unwrap(),
                    quad: vec![],
                    cst: 0,
                },
                GateOp::Not(a) => Constraint {
                    lin: unit(w).xor(&unit(*a)).unwrap(),
                    quad: vec![],
                    cst: 1,
                },
                GateOp::Const0 => Constraint {
                    lin: unit(w),
                    quad: vec![],
                    cst: 0,
                },
                GateOp::Const1 => Constraint {
                    lin: unit(w),
                    quad: vec![],
                    cst: 1,
                },
            };
            out.push(c);
        }
        out.push(Constraint {
            lin: unit(self.output),
            quad: vec![],
            cst: 1,
        });
        out
    }
}

/// Incremental construction helper; returns wire indices.
#[derive(Debug, Clone, Default)]
pub struct CircuitBuilder {
    inputs: usize,
    gates: Vec<GateOp>,
}

impl CircuitBuilder {
    pub fn new(inputs: usize) -> Self {
        CircuitBuilder {
            inputs,
            gates: Vec::new(),
        }
    }

    pub fn input(&self, i: usize) -> usize {
        assert!(i < self.inputs, "input {i} out of range");
        i
    }

    fn push(&mut self, g: GateOp) -> usize {
        self.gates.push(g);
        self.inputs + self.gates.len() - 1
    }

    pub fn and(&mut self, a: usize, b: usize) -> usize {
        self.push(GateOp::And(a, b))
    }

    pub fn xor(&mut self, a: usize, b: usize) -> usize {
        self.push(GateOp::Xor(a, b))
    }

    pub fn not(&mut self, a: usize) -> usize {
        self.push(GateOp::Not(a))
    }

    pub fn const0(&mut self) -> usize {
        self.push(GateOp::Const0)
    }

    pub fn const1(&mut self) -> usize {
        self.push(GateOp::Const1)
    }

    /// a ∨ b = a ⊕ b ⊕ ab.
    pub fn or(&mut self, a: usize, b: usize) -> usize {
        let x = self.xor(a, b);
        let p = self.and(a, b);
        self.xor(x, p)
    }

    /// a XNOR b.
    pub fn eq(&mut self, a: usize, b: usize) -> usize {
        let x = self.xor(a, b);
        self.not(x)
    }

    /// Inlines a whole subcircuit, feeding it the given wires as inputs;
    /// returns the wire carrying the subcircuit's output.
    pub fn embed(&mut self, sub: &BooleanCircuit, inputs: &[usize]) -> usize {
        assert_eq!(inputs.len(), sub.inputs, "embed input arity");
        let mut map: Vec<usize> = inputs.to_vec();
        for gate in &sub.gates {
            let mapped = match gate {
                GateOp::And(a, b) => GateOp::And(map[*a], map[*b]),
                GateOp::Xor(a, b) => GateOp::Xor(map[*a], map[*b]),
                GateOp::Not(a) => GateOp::Not(map[*a]),
                GateOp::Const0 => GateOp::Const0,
                GateOp::Const1 => GateOp::Const1,
            };
            map.push(self.push(mapped));
        }
        map[sub.output]
    }

    pub fn finish(self, output: usize) -> BooleanCircuit {
        let c = BooleanCircuit {
            inputs: self.inputs,
            gates: self.gates,
            output,
        };
        c.validate().expect("builder produces valid circuits");
        c
    }
}
