//! Domain resolution: built-in names, domain files and inline tables.

use anyhow::{anyhow, bail, Context, Result};
use neumann_core::geometry::{Domain, DomainSpec, GraphDomain};
use std::path::Path;

pub const BUILTIN: &[&str] = &["square", "interval", "disc", "cusp", "cusp3", "sawtooth", "rectangle"];

pub fn builtin(name: &str) -> Option<Result<Domain>> {
    let spec = match name {
        "square" => Domain::unit_square(),
        "interval" => Domain::unit_interval(),
        "disc" => Domain::unit_disc(),
        "cusp" => return Some(Domain::cusp(2, 0.5).map_err(Into::into)),
        "cusp3" => return Some(Domain::cusp(3, 0.5).map_err(Into::into)),
        "sawtooth" => {
            return Some(
                GraphDomain::sawtooth(1.0, 3, 0.6, 0.8)
                    .and_then(|g| Domain::new(DomainSpec::Graph(g)))
                    .map_err(Into::into),
            )
        }
        "rectangle" => {
            let text = "kind = \"graph\"\nprofile = \"1\"\ngamma = 1.0\nholder_constant = 0.0\nk_lo = 1.0\nk_hi = 1.0\n\
                        [base]\nkind = \"box\"\nlo = [0.0]\nhi = [1.0]\n";
            return Some(from_toml_text(text));
        }
        _ => return None,
    };
    Some(Ok(spec))
}

fn from_toml_text(text: &str) -> Result<Domain> {
    let spec: DomainSpec = toml::from_str(text).map_err(|e| anyhow!("{e}"))?;
    Ok(Domain::new(spec)?)
}

pub fn from_value(v: &toml::Value) -> Result<Domain> {
    match v {
        toml::Value::String(s) => resolve(s),
        toml::Value::Table(_) => {
            let spec: DomainSpec = v.clone().try_into().map_err(|e| anyhow!("invalid domain table: {e}"))?;
            Ok(Domain::new(spec)?)
        }
        _ => bail!("domain must be a name, a file path or a table"),
    }
}

/// A built-in name or a path to a TOML file holding one domain table.
pub fn resolve(name_or_path: &str) -> Result<Domain> {
    if let Some(d) = builtin(name_or_path) {
        return d;
    }
    let path = Path::new(name_or_path);
    if !path.exists() {
        bail!(
            "unknown domain '{name_or_path}': not a file and not one of {}",
            BUILTIN.join(", ")
        );
    }
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read domain file {}", path.display()))?;
    from_toml_text(&text).with_context(|| format!("invalid domain file {}", path.display()))
}

/// Kernel exponent `M` used when none is configured: `1` on intervals,
/// `(γ+N-1)/γ` on cusps and `N + 1/2` otherwise.
pub fn default_heat_exponent(domain: &Domain) -> f64 {
    let n = domain.dim() as f64;
    match domain.spec() {
        DomainSpec::Box { .. } if domain.dim() == 1 => 1.0,
        DomainSpec::Cusp { gamma, .. } => (gamma + n - 1.0) / gamma,
        _ => n + 0.5,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_resolve() {
        for name in BUILTIN {
            let d = resolve(name).unwrap();
            assert!(d.dim() >= 1);
        }
        assert_eq!(default_heat_exponent(&resolve("interval").unwrap()), 1.0);
        assert_eq!(default_heat_exponent(&resolve("square").unwrap()), 2.5);
        assert_eq!(default_heat_exponent(&resolve("cusp").unwrap()), 3.0);
        let r = resolve("rectangle").unwrap();
        assert_eq!(neumann_core::perturbation::rectangle_sides(&r), Some((1.0, 1.0)));
    }

    #[test]
    fn unknown_name_and_bad_table() {
        let e = resolve("sqare").unwrap_err().to_string();
        assert!(e.contains("unknown domain"), "{e}");
        let v: toml::Value = toml::from_str("kind = \"box\"\nlo = [0.0]\nhi = [1.0]\nextra = 1").unwrap();
        assert!(from_value(&v).is_err());
    }
}
