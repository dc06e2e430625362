//! Self-describing model files.
//!
//! A model file is a JSON document carrying a format tag, a version, and the
//! model itself tagged by kind. Floating-point parameters are written in
//! shortest round-trip form, so `save(load(save(m))) == save(m)` byte for byte.

use serde::{Deserialize, Serialize};

use super::{ActionModel, CategoricalActionModel, MixtureActionModel, NGramActionModel, StateId, UniformActionModel};
use crate::alphabet::{Symbol, SymbolAlphabet};
use crate::error::{Error, Result};

pub const MODEL_FORMAT: &str = "infoact-model";
pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Any model that can be written to a model file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AnyModel {
    Uniform(UniformActionModel),
    Categorical(CategoricalActionModel),
    Ngram(NGramActionModel),
    Mixture(MixtureActionModel),
}

impl ActionModel for AnyModel {
    fn alphabet(&self) -> &SymbolAlphabet {
        match self {
            AnyModel::Uniform(m) => m.alphabet(),
            AnyModel::Categorical(m) => m.alphabet(),
            AnyModel::Ngram(m) => m.alphabet(),
            AnyModel::Mixture(m) => m.alphabet(),
        }
    }

    fn raw_distribution(&self, state: StateId, prefix: &[Symbol]) -> Result<Vec<f64>> {
        match self {
            AnyModel::Uniform(m) => m.raw_distribution(state, prefix),
            AnyModel::Categorical(m) => m.raw_distribution(state, prefix),
            AnyModel::Ngram(m) => m.raw_distribution(state, prefix),
            AnyModel::Mixture(m) => m.raw_distribution(state, prefix),
        }
    }
}

impl From<UniformActionModel> for AnyModel {
    fn from(m: UniformActionModel) -> Self {
        AnyModel::Uniform(m)
    }
}

impl From<CategoricalActionModel> for AnyModel {
    fn from(m: CategoricalActionModel) -> Self {
        AnyModel::Categorical(m)
    }
}

impl From<NGramActionModel> for AnyModel {
    fn from(m: NGramActionModel) -> Self {
        AnyModel::Ngram(m)
    }
}

impl From<MixtureActionModel> for AnyModel {
    fn from(m: MixtureActionModel) -> Self {
        AnyModel::Mixture(m)
    }
}

#[derive(Serialize, Deserialize)]
struct Envelope {
    format: String,
    version: u32,
    model: AnyModel,
}

pub fn save_model(model: &AnyModel) -> Result<String> {
    let env = Envelope {
        format: MODEL_FORMAT.to_string(),
        version: MODEL_FORMAT_VERSION,
        model: model.clone(),
    };
    let mut s = serde_json::to_string_pretty(&env)?;
    s.push('\n');
    Ok(s)
}

pub fn load_model(text: &str) -> Result<AnyModel> {
    let env: Envelope = serde_json::from_str(text)?;
    if env.format != MODEL_FORMAT {
        return Err(Error::Format(format!("not a model file (format tag {:?})", env.format)));
    }
    if env.version != MODEL_FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported model file version {}", env.version)));
    }
    Ok(env.model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fit_ngram;

    #[test]
    fn ngram_file_is_byte_stable() {
        let alphabet = SymbolAlphabet::with_terminal(&["a", "b", "c"], 4).unwrap();
        let corpus = alphabet.parse_corpus("a b <T> c <T>\nb b b <T>\n").unwrap();
        let m: AnyModel = fit_ngram(&alphabet, &corpus, 2, 0.5).unwrap().into();
        let text = save_model(&m).unwrap();
        let back = load_model(&text).unwrap();
        assert_eq!(back, m);
        assert_eq!(save_model(&back).unwrap(), text);
    }

    #[test]
    fn mixture_file_round_trips() {
        let alphabet = SymbolAlphabet::with_terminal(&["a", "b"], 3).unwrap();
        let c1 = fit_ngram(&alphabet, &alphabet.parse_corpus("a <T>\n").unwrap(), 1, 0.5).unwrap();
        let c2 = fit_ngram(&alphabet, &alphabet.parse_corpus("b b <T>\n").unwrap(), 1, 0.5).unwrap();
        let mut mix = MixtureActionModel::new(vec![c1.into(), c2.into()]).unwrap();
        mix.update(0, &alphabet.parse("a <T>").unwrap()).unwrap();
        let m: AnyModel = mix.into();
        let text = save_model(&m).unwrap();
        assert_eq!(load_model(&text).unwrap(), m);
    }

    #[test]
    fn rejects_foreign_files() {
        assert!(load_model("{\"format\":\"x\",\"version\":1,\"model\":{}}").is_err());
        let alphabet = SymbolAlphabet::with_terminal(&["a"], 2).unwrap();
        let m: AnyModel = fit_ngram(&alphabet, &[], 0, 0.5).unwrap().into();
        let text = save_model(&m).unwrap().replace("\"version\": 1", "\"version\": 9");
        assert!(matches!(load_model(&text), Err(Error::Format(_))));
    }
}
