// SPDX-License-Identifier: Apache-2.0

//! Binary operators on scalars, extended elementwise over vectors.

use std::cmp::Ordering;

use super::ast::BinOp;
use super::{Result, WflError};
use crate::value::{numeric_cmp, Value};

/// Applies `op`, broadcasting when either side is a vector:
/// vector∘scalar and scalar∘vector map over the vector, vector∘vector pairs
/// elements of equal-length vectors.
pub fn broadcast_apply(op: BinOp, l: &Value, r: &Value) -> Result<Value> {
    match (l, r) {
        (Value::Vector(a), Value::Vector(b)) => {
            if a.len() != b.len() {
                return Err(WflError::LengthMismatch(a.len(), b.len()));
            }
            let out = a
                .iter()
                .zip(b.iter())
                .map(|(x, y)| broadcast_apply(op, x, y))
                .collect::<Result<Vec<_>>>()?;
            Ok(Value::vector(out))
        }
        (Value::Vector(a), s) => Ok(Value::vector(
            a.iter().map(|x| broadcast_apply(op, x, s)).collect::<Result<Vec<_>>>()?,
        )),
        (s, Value::Vector(b)) => Ok(Value::vector(
            b.iter().map(|y| broadcast_apply(op, s, y)).collect::<Result<Vec<_>>>()?,
        )),
        _ => scalar_binop(op, l, r),
    }
}

fn type_err(op: BinOp, l: &Value, r: &Value) -> WflError {
    WflError::Type(format!(
        "operator '{}' is not defined for {} and {}",
        op.symbol(),
        l.type_name(),
        r.type_name()
    ))
}

pub fn scalar_binop(op: BinOp, l: &Value, r: &Value) -> Result<Value> {
    if op.is_arith() {
        arith(op, l, r)
    } else if op.is_comparison() {
        compare(op, l, r).map(Value::Bool)
    } else {
        let truth = |v: &Value| match v {
            Value::Bool(b) => Ok(*b),
            Value::Null => Ok(false),
            _ => Err(type_err(op, l, r)),
        };
        let (a, b) = (truth(l)?, truth(r)?);
        Ok(Value::Bool(if op == BinOp::And { a && b } else { a || b }))
    }
}

fn arith(op: BinOp, l: &Value, r: &Value) -> Result<Value> {
    let overflow = || WflError::Overflow(format!("'{}'", op.symbol()));
    match (l, r) {
        (Value::Null, _) | (_, Value::Null) => {
            if (l.is_null() || l.is_numeric() || matches!(l, Value::Str(_)))
                && (r.is_null() || r.is_numeric() || matches!(r, Value::Str(_)))
            {
                Ok(Value::Null)
            } else {
                Err(type_err(op, l, r))
            }
        }
        (Value::Int(a), Value::Int(b)) => {
            let (a, b) = (*a, *b);
            let v = match op {
                BinOp::Add => a.checked_add(b),
                BinOp::Sub => a.checked_sub(b),
                BinOp::Mul => a.checked_mul(b),
                BinOp::Div | BinOp::Rem => {
                    if b == 0 {
                        return Err(WflError::DivisionByZero);
                    }
                    if op == BinOp::Div {
                        a.checked_div(b)
                    } else {
                        a.checked_rem(b)
                    }
                }
                _ => unreachable!(),
            };
            v.map(Value::Int).ok_or_else(overflow)
        }
        (Value::Uint(a), Value::Uint(b)) => {
            let (a, b) = (*a, *b);
            let v = match op {
                BinOp::Add => a.checked_add(b),
                BinOp::Sub => a.checked_sub(b),
                BinOp::Mul => a.checked_mul(b),
                BinOp::Div | BinOp::Rem => {
                    if b == 0 {
                        return Err(WflError::DivisionByZero);
                    }
                    if op == BinOp::Div {
                        Some(a / b)
                    } else {
                        Some(a % b)
                    }
                }
                _ => unreachable!(),
            };
            v.map(Value::Uint).ok_or_else(overflow)
        }
        (Value::Str(a), Value::Str(b)) if op == BinOp::Add => {
            let mut s = String::with_capacity(a.len() + b.len());
            s.push_str(a);
            s.push_str(b);
            Ok(Value::str(s))
        }
        (a, b) if a.is_numeric() && b.is_numeric() => {
            let (x, y) = (a.as_f64().unwrap(), b.as_f64().unwrap());
            Ok(Value::Double(match op {
                BinOp::Add => x + y,
                BinOp::Sub => x - y,
                BinOp::Mul => x * y,
                BinOp::Div => x / y,
                BinOp::Rem => x % y,
                _ => unreachable!(),
            }))
        }
        _ => Err(type_err(op, l, r)),
    }
}

fn ord_result(op: BinOp, o: Option<Ordering>) -> bool {
    let Some(o) = o else {
        return op == BinOp::Ne;
    };
    match op {
        BinOp::Eq => o == Ordering::Equal,
        BinOp::Ne => o != Ordering::Equal,
        BinOp::Lt => o == Ordering::Less,
        BinOp::Le => o != Ordering::Greater,
        BinOp::Gt => o == Ordering::Greater,
        BinOp::Ge => o != Ordering::Less,
        _ => unreachable!(),
    }
}

/// Scalar comparison. Any comparison involving null is false.
pub fn compare(op: BinOp, l: &Value, r: &Value) -> Result<bool> {
    let eq_only = matches!(op, BinOp::Eq | BinOp::Ne);
    Ok(match (l, r) {
        (Value::Null, _) | (_, Value::Null) => false,
        (a, b) if a.is_numeric() && b.is_numeric() => {
            let o = match (a, b) {
                (Value::Int(_) | Value::Uint(_), Value::Int(_) | Value::Uint(_)) => Some(numeric_cmp(a, b)),
                _ => a.as_f64().unwrap().partial_cmp(&b.as_f64().unwrap()),
            };
            ord_result(op, o)
        }
        (Value::Str(a), Value::Str(b)) => ord_result(op, Some(a.cmp(b))),
        (Value::Bool(a), Value::Bool(b)) => ord_result(op, Some(a.cmp(b))),
        (a, b) if eq_only && std::mem::discriminant(a) == std::mem::discriminant(b) => {
            let same = a.key_bytes() == b.key_bytes();
            if op == BinOp::Eq {
                same
            } else {
                !same
            }
        }
        _ => return Err(type_err(op, l, r)),
    })
}

/// `lo <= x <= hi`; false when any side is null.
pub fn between(x: &Value, lo: &Value, hi: &Value) -> Result<Value> {
    match x {
        Value::Vector(xs) => Ok(Value::vector(
            xs.iter().map(|v| between(v, lo, hi)).collect::<Result<Vec<_>>>()?,
        )),
        _ => Ok(Value::Bool(compare(BinOp::Ge, x, lo)? && compare(BinOp::Le, x, hi)?)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn ints(v: &[i64]) -> Value {
        Value::vector(v.iter().map(|x| Value::Int(*x)).collect())
    }

    #[test]
    fn rule_instances() {
        assert_eq!(broadcast_apply(BinOp::Add, &ints(&[1, 2, 3]), &Value::Int(1)).unwrap(), ints(&[2, 3, 4]));
        assert_eq!(broadcast_apply(BinOp::Div, &ints(&[10, 20]), &ints(&[2, 4])).unwrap(), ints(&[5, 5]));
        assert_eq!(
            broadcast_apply(BinOp::Add, &ints(&[1]), &ints(&[1, 2])),
            Err(WflError::LengthMismatch(1, 2))
        );
    }

    #[test]
    fn numeric_rules() {
        assert_eq!(scalar_binop(BinOp::Add, &Value::Int(1), &Value::Uint(2)).unwrap(), Value::Double(3.0));
        assert_eq!(scalar_binop(BinOp::Div, &Value::Int(7), &Value::Int(2)).unwrap(), Value::Int(3));
        assert_eq!(scalar_binop(BinOp::Div, &Value::Int(7), &Value::Int(0)), Err(WflError::DivisionByZero));
        assert!(matches!(
            scalar_binop(BinOp::Add, &Value::Int(i64::MAX), &Value::Int(1)),
            Err(WflError::Overflow(_))
        ));
        assert!(matches!(
            scalar_binop(BinOp::Sub, &Value::Uint(0), &Value::Uint(1)),
            Err(WflError::Overflow(_))
        ));
        assert_eq!(
            scalar_binop(BinOp::Div, &Value::Double(1.0), &Value::Int(0)).unwrap(),
            Value::Double(f64::INFINITY)
        );
        assert_eq!(scalar_binop(BinOp::Add, &Value::Null, &Value::Int(1)).unwrap(), Value::Null);
        assert!(scalar_binop(BinOp::Add, &Value::str("a"), &Value::Int(1)).is_err());
        assert!(compare(BinOp::Eq, &Value::str("1"), &Value::Int(1)).is_err());
        assert!(!compare(BinOp::Eq, &Value::Null, &Value::Null).unwrap());
        assert!(!compare(BinOp::Ne, &Value::Null, &Value::Int(1)).unwrap());
        assert!(compare(BinOp::Lt, &Value::Int(-1), &Value::Uint(u64::MAX)).unwrap());
    }

    #[test]
    fn broadcast_equals_explicit_loop() {
        let ops = [
            BinOp::Add, BinOp::Sub, BinOp::Mul, BinOp::Div, BinOp::Rem, BinOp::Eq, BinOp::Ne,
            BinOp::Lt, BinOp::Le, BinOp::Gt, BinOp::Ge,
        ];
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        for _ in 0..10_000 {
            let n = rng.gen_range(0..6);
            let op = ops[rng.gen_range(0..ops.len())];
            let gen = |rng: &mut rand_chacha::ChaCha8Rng| -> Value {
                match rng.gen_range(0..3) {
                    0 => Value::Int(rng.gen_range(-50..50)),
                    1 => Value::Double(rng.gen_range(-5.0..5.0)),
                    _ => Value::Null,
                }
            };
            let a: Vec<Value> = (0..n).map(|_| gen(&mut rng)).collect();
            let b: Vec<Value> = (0..n).map(|_| gen(&mut rng)).collect();
            let got = broadcast_apply(op, &Value::vector(a.clone()), &Value::vector(b.clone()));
            let mut expect = Vec::new();
            let mut err = None;
            for (x, y) in a.iter().zip(&b) {
                match scalar_binop(op, x, y) {
                    Ok(v) => expect.push(v),
                    Err(e) => {
                        err = Some(e);
                        break;
                    }
                }
            }
            match err {
                Some(e) => assert_eq!(got, Err(e)),
                None => {
                    let got = got.unwrap();
                    assert_eq!(got.key_bytes(), Value::vector(expect).key_bytes());
                }
            }
            let s = gen(&mut rng);
            let got = broadcast_apply(op, &Value::vector(a.clone()), &s);
            let expect: std::result::Result<Vec<Value>, WflError> =
                a.iter().map(|x| scalar_binop(op, x, &s)).collect();
            match expect {
                Ok(v) => assert_eq!(got.unwrap().key_bytes(), Value::vector(v).key_bytes()),
                Err(e) => assert_eq!(got, Err(e)),
            }
        }
    }
}
