use std::collections::BTreeMap;

use super::{input, param, upper_z, BaseFunction, Expr, ExprError};

/// Named base functions, looked up by family id such as `sim1.f2.3`.
#[derive(Debug, Clone, Default)]
pub struct BaseFunctionLibrary {
    entries: BTreeMap<String, BaseFunction>,
}

impl BaseFunctionLibrary {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, f: BaseFunction) {
        self.entries.insert(f.id.clone(), f);
    }

    pub fn get(&self, id: &str) -> Result<&BaseFunction, ExprError> {
        self.entries.get(id).ok_or_else(|| ExprError::Unknown(id.to_string()))
    }

    pub fn resolve<S: AsRef<str>>(&self, ids: &[S]) -> Result<Vec<BaseFunction>, ExprError> {
        ids.iter().map(|id| self.get(id.as_ref()).cloned()).collect()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    /// All four built-in study families.
    pub fn builtin() -> Self {
        let mut lib = Self::new();
        let mut add = |id: &str, arity: usize, body: Expr| {
            lib.register(BaseFunction::new(id, arity, body).expect("built-in base function"));
        };

        // Sample-size kernels over x = (mu0, alpha, beta).
        let kernel = || upper_z(1) + upper_z(2);
        add("sim1.f1.1", 2, param(0) * (input(0).square() + input(1).square()));
        add("sim1.f1.2", 2, param(0) * input(0) + param(1) * input(1));
        add("sim1.f1.3", 2, param(0) * input(0) + param(1) * input(1) + param(2));
        add("sim1.f2.1", 3, (kernel() / input(0)).square() + param(0));
        add("sim1.f2.2", 3, param(0) * ((kernel() + param(1)) / input(0)).square());
        add(
            "sim1.f2.3",
            3,
            param(0) * ((kernel() + param(1)) / input(0) + param(2)).square(),
        );
        add(
            "sim1.f2.4",
            3,
            ((param(0) * upper_z(1) + param(1) * upper_z(2)) / input(0) + param(2)).square()
                + param(3),
        );

        // Linear kernels over three generic inputs.
        add(
            "sim2.f2.1",
            3,
            param(0) * (input(0).square() + input(1).square() + input(2).square()),
        );
        add("sim2.f2.2", 3, param(0) * (input(0) + input(1) + input(2)) + param(1));
        add(
            "sim2.f2.3",
            3,
            param(0) * input(0) + param(1) * input(1) + param(2) * input(2),
        );
        add(
            "sim2.f2.4",
            3,
            param(0) * input(0) + param(1) * input(1) + param(2) * input(2) + param(3),
        );

        // Logit scores for the softmax-pair head; x = (q1, q2, n) below.
        add("sim3.f1.1", 2, param(0) * input(0) + param(0) * input(1));
        add("sim3.f1.2", 2, param(0) * input(0) + param(1) * input(1));
        add("sim3.f1.3", 2, param(0) * input(0) + param(1) * input(1) + param(2));
        add("sim3.f2.1", 3, (param(0) * input(0) + param(0) * input(1)) / input(2));
        add("sim3.f2.2", 3, (param(0) * input(0) + param(1) * input(1)) / input(2));
        add(
            "sim3.f2.3",
            3,
            (param(0) * input(0) + param(1) * input(1)) / (input(2) + param(2)),
        );

        // Additive, quadratic and cubic terms over two standardized covariates.
        add("nhanes.f1.1", 2, param(0) * (input(0) + input(1)).square());
        add("nhanes.f1.2", 2, param(0) * input(0).cube() + param(1) * input(1).cube());
        add("nhanes.f1.3", 2, param(0) * input(0) + param(1) * input(1) + param(2));
        add("nhanes.f2.1", 2, param(0) * (input(0) + input(1)).square());
        add("nhanes.f2.2", 2, param(0) * input(0).cube() + param(1) * input(1).cube());
        add("nhanes.f2.3", 2, param(0) * input(0) + param(1) * input(1) + param(2));
        lib
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_param_counts() {
        let lib = BaseFunctionLibrary::builtin();
        let counts = [
            ("sim1.f1.1", 1),
            ("sim1.f1.2", 2),
            ("sim1.f1.3", 3),
            ("sim1.f2.1", 1),
            ("sim1.f2.2", 2),
            ("sim1.f2.3", 3),
            ("sim1.f2.4", 4),
            ("sim2.f2.1", 1),
            ("sim2.f2.2", 2),
            ("sim2.f2.3", 3),
            ("sim2.f2.4", 4),
            ("sim3.f1.1", 1),
            ("sim3.f1.2", 2),
            ("sim3.f1.3", 3),
            ("sim3.f2.1", 1),
            ("sim3.f2.2", 2),
            ("sim3.f2.3", 3),
            ("nhanes.f1.1", 1),
            ("nhanes.f1.2", 2),
            ("nhanes.f1.3", 3),
            ("nhanes.f2.1", 1),
            ("nhanes.f2.2", 2),
            ("nhanes.f2.3", 3),
        ];
        for (id, k) in counts {
            assert_eq!(lib.get(id).unwrap().param_count, k, "{id}");
        }
        assert_eq!(lib.names().count(), counts.len());
    }

    #[test]
    fn unknown_name_is_an_error() {
        let lib = BaseFunctionLibrary::builtin();
        assert_eq!(lib.get("sim9.f1.1"), Err(ExprError::Unknown("sim9.f1.1".into())));
    }
}
