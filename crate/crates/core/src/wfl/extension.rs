// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeMap;
use std::sync::{Arc, RwLock};

use super::{Result, WflError};
use crate::value::Value;

pub type ExtFn = Arc<dyn Fn(&[Value]) -> Result<Value> + Send + Sync>;

/// Functions exposed under one namespace, callable as `ns.name(args)`.
#[derive(Clone, Default)]
pub struct FunctionTable {
    fns: BTreeMap<String, ExtFn>,
}

impl FunctionTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with<F>(mut self, name: &str, f: F) -> Self
    where
        F: Fn(&[Value]) -> Result<Value> + Send + Sync + 'static,
    {
        self.fns.insert(name.to_string(), Arc::new(f));
        self
    }

    pub fn get(&self, name: &str) -> Option<&ExtFn> {
        self.fns.get(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.fns.keys().map(String::as_str)
    }
}

/// Namespaced extension functions, shared by all workers.
#[derive(Default)]
pub struct Registry {
    namespaces: RwLock<BTreeMap<String, Arc<FunctionTable>>>,
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register_extension(&self, name: &str, table: FunctionTable) -> Result<()> {
        let mut ns = self.namespaces.write().expect("registry lock");
        if ns.contains_key(name) {
            return Err(WflError::DuplicateNamespace(name.to_string()));
        }
        ns.insert(name.to_string(), Arc::new(table));
        Ok(())
    }

    pub fn lookup(&self, ns: &str, name: &str) -> Result<ExtFn> {
        let map = self.namespaces.read().expect("registry lock");
        let table = map
            .get(ns)
            .ok_or_else(|| WflError::UnknownFunction(format!("{ns}.{name}")))?;
        table
            .get(name)
            .cloned()
            .ok_or_else(|| WflError::UnknownFunction(format!("{ns}.{name}")))
    }

    pub fn namespaces(&self) -> Vec<String> {
        self.namespaces.read().expect("registry lock").keys().cloned().collect()
    }

    /// `ns.fn` names for completion.
    pub fn qualified_names(&self) -> Vec<String> {
        let map = self.namespaces.read().expect("registry lock");
        map.iter()
            .flat_map(|(ns, t)| t.names().map(move |n| format!("{ns}.{n}")).collect::<Vec<_>>())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn register_and_duplicate() {
        let r = Registry::new();
        let square = FunctionTable::new().with("square", |a: &[Value]| {
            let x = a.first().and_then(Value::as_f64).ok_or_else(|| WflError::Type("number".into()))?;
            Ok(Value::Double(x * x))
        });
        r.register_extension("m", square.clone()).unwrap();
        let f = r.lookup("m", "square").unwrap();
        assert_eq!(f(&[Value::Int(3)]).unwrap(), Value::Double(9.0));
        assert_eq!(r.register_extension("m", square), Err(WflError::DuplicateNamespace("m".into())));
        assert!(matches!(r.lookup("m", "cube"), Err(WflError::UnknownFunction(_))));
        assert_eq!(r.qualified_names(), vec!["m.square"]);
    }
}
