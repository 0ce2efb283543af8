//! Scenario files and result serialization.

pub mod dsl;
pub mod emit;

use std::path::Path;

use crate::circuit::{Scenario, ScenarioKind};
use crate::error::{Error, Result};
use dsl::ScenarioDocument;

/// Source text of the built-in scenarios, in [`ScenarioKind::NAMES`] order.
pub const BUILTIN_FILES: [(&str, &str); 5] = [
    ("mach_zehnder", include_str!("../../scenarios/mach_zehnder.wv")),
    ("dark_port_mz", include_str!("../../scenarios/dark_port_mz.wv")),
    ("nested", include_str!("../../scenarios/nested.wv")),
    ("cheshire_cat", include_str!("../../scenarios/cheshire_cat.wv")),
    ("salih_single_outer", include_str!("../../scenarios/salih_single_outer.wv")),
];

pub fn builtin_source(name: &str) -> Option<&'static str> {
    BUILTIN_FILES.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

/// A scenario together with the document it came from, if any.
#[derive(Debug, Clone)]
pub struct LoadedScenario {
    pub scenario: Scenario,
    pub document: Option<ScenarioDocument>,
    pub source: String,
}

/// Resolves `spec` as a file path when one exists, otherwise as a built-in
/// name with optional parameters (`salih_single_outer:cycles=5,bob=off`).
///
/// A built-in with default parameters is loaded from its shipped file;
/// parameterized variants come from the programmatic builder.
pub fn load(spec: &str) -> Result<LoadedScenario> {
    let path = Path::new(spec);
    if path.is_file() {
        let source = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidParameter(format!("cannot read `{spec}`: {e}")))?;
        let (document, scenario) = dsl::load_scenario(&source)?;
        return Ok(LoadedScenario {
            scenario,
            document: Some(document),
            source,
        });
    }
    let kind: ScenarioKind = spec.parse()?;
    let default = ScenarioKind::from_name(kind.name())?;
    if kind == default {
        let source = builtin_source(kind.name()).expect("every kind ships a file");
        let (document, scenario) = dsl::load_scenario(source)?;
        return Ok(LoadedScenario {
            scenario,
            document: Some(document),
            source: source.to_owned(),
        });
    }
    let scenario = crate::circuit::build_scenario(kind)?;
    Ok(LoadedScenario {
        source: format!("# generated by the builder for `{kind}`\n"),
        scenario,
        document: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::build_scenario;

    #[test]
    fn builtin_files_match_builders() {
        for (name, text) in BUILTIN_FILES {
            let (doc, sc) = dsl::load_scenario(text).unwrap_or_else(|e| panic!("{name}: {e}"));
            let built = build_scenario(ScenarioKind::from_name(name).unwrap()).unwrap();
            assert_eq!(doc.name.as_deref(), Some(name));
            assert_eq!(sc.name, built.name);
            assert_eq!(sc.circuit, built.circuit, "{name}");
            assert_eq!(sc.input, built.input, "{name}");
            assert_eq!(sc.postselections, built.postselections, "{name}");
            for (a, b) in sc.circuit.layer_unitaries().iter().zip(built.circuit.layer_unitaries()) {
                assert_eq!(a.matrix(), b.matrix());
            }
        }
    }

    #[test]
    fn names_line_up() {
        let names: Vec<&str> = BUILTIN_FILES.iter().map(|(n, _)| *n).collect();
        assert_eq!(names, ScenarioKind::NAMES);
    }

    #[test]
    fn load_resolves_builtins_and_params() {
        let l = load("nested").unwrap();
        assert!(l.document.is_some());
        let l = load("salih_single_outer:cycles=5,bob=off").unwrap();
        assert!(l.document.is_none());
        assert_eq!(l.scenario.circuit.num_layers(), 20);
        assert!(matches!(load("no_such_thing"), Err(Error::UnknownScenario(_))));
    }

    #[test]
    fn load_reads_files() {
        let dir = std::env::temp_dir().join(format!("weaktrace-load-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let p = dir.join("mz.wv");
        std::fs::write(&p, builtin_source("mach_zehnder").unwrap()).unwrap();
        let l = load(p.to_str().unwrap()).unwrap();
        assert_eq!(l.scenario.name, "mach_zehnder");
        std::fs::write(&p, "mode A\nbs A r=2\n").unwrap();
        assert!(matches!(load(p.to_str().unwrap()), Err(Error::Dsl(_))));
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
