//! Data preparation shared by training, evaluation and ablation:
//! split, impute, normalize, encode and window.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::dataset::{fit_normalization, impute_static_means, NormScheme, NormalizationSpec, StaticAttributeTable, TimeSeriesPanel};
use crate::encodings::{assemble_known_inputs, EncodingConfig, SpatialBounds};
use crate::error::{Error, Result};
use crate::tensor::Tensor;
use crate::train::RunManifest;
use crate::windowing::{
    select_feature_roles, spatial_split, CatchmentSeries, ExperimentMode, FeatureRoles, SplitAssignment, SplitConfig,
    WindowSpec, WindowedDataset,
};

/// Everything that decides how raw panels become model inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DataConfig {
    pub mode: ExperimentMode,
    pub encoding: EncodingConfig,
    pub window: WindowSpec,
    pub split: SplitConfig,
    pub normalization: NormScheme,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            mode: ExperimentMode::Multivariate,
            encoding: EncodingConfig::default(),
            window: WindowSpec::default(),
            split: SplitConfig::default(),
            normalization: NormScheme::MinMax,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PreparedData {
    pub split: SplitAssignment,
    pub normalization: NormalizationSpec,
    pub roles: FeatureRoles,
    pub manifest: RunManifest,
    pub bounds: Option<SpatialBounds>,
    pub train: WindowedDataset,
    pub val: WindowedDataset,
    /// Validation panels on the normalized scale.
    pub val_panels: Vec<TimeSeriesPanel>,
}

fn columns(panel: &TimeSeriesPanel, vars: &[usize]) -> Result<Tensor> {
    let data = panel.values().iter().flat_map(|r| vars.iter().map(move |&v| r[v])).collect();
    Tensor::new(vec![panel.len(), vars.len()], data)
}

/// Turns normalized panels into per-catchment model arrays.
pub fn build_series(
    panels: &[TimeSeriesPanel],
    statics: Option<&StaticAttributeTable>,
    encoding: &EncodingConfig,
    bounds: Option<&SpatialBounds>,
    roles: &FeatureRoles,
) -> Result<Vec<CatchmentSeries>> {
    panels
        .iter()
        .map(|p| {
            let row = statics.map(|t| t.row(p.catchment_id())).transpose()?;
            let names = statics.map(|t| t.attribute_names.as_slice()).unwrap_or(&[]);
            let known = assemble_known_inputs(encoding, p, row.as_ref().map(|r| (r, names)), bounds)?;
            Ok(CatchmentSeries {
                catchment_id: p.catchment_id().to_string(),
                known: known.values,
                observed: columns(p, &roles.observed)?,
                targets: columns(p, &roles.targets)?,
            })
        })
        .collect()
}

/// Splits catchments spatially, imputes and normalizes with statistics from
/// the training catchments only, assembles known inputs and builds windows.
pub fn prepare_data(
    panels: &[TimeSeriesPanel],
    statics: Option<&StaticAttributeTable>,
    config: &DataConfig,
) -> Result<PreparedData> {
    config.encoding.validate()?;
    config.window.validate()?;
    let needs_statics = config.encoding.include_static || config.encoding.use_linear_space;
    let statics = match statics {
        Some(t) => Some(t),
        None if needs_statics => {
            return Err(Error::Config(
                "a static attribute table is required when static features or linear space encodings are enabled"
                    .into(),
            ))
        }
        None => None,
    };
    if let Some(t) = statics {
        if let Some(p) = panels.iter().find(|p| t.index_of(p.catchment_id()).is_none()) {
            return Err(Error::Data(format!("catchment {} has no static attribute row", p.catchment_id())));
        }
    }

    let ids: Vec<String> = panels.iter().map(|p| p.catchment_id().to_string()).collect();
    let split = spatial_split(&ids, &config.split)?;
    let train_ids: HashSet<&str> = split.train_ids.iter().map(String::as_str).collect();
    let (train_raw, val_raw): (Vec<_>, Vec<_>) =
        panels.iter().cloned().partition(|p| train_ids.contains(p.catchment_id()));

    let imputed = statics.map(impute_static_means).transpose()?;
    let static_for_fit = if config.encoding.include_static { imputed.as_ref() } else { None };
    let normalization = fit_normalization(&train_raw, static_for_fit, config.normalization)?;
    let normalized_table = static_for_fit.map(|t| normalization.apply_table(t)).transpose()?;
    let table_for_inputs = normalized_table.as_ref().or(imputed.as_ref());

    let bounds = match (&imputed, config.encoding.use_linear_space) {
        (Some(t), true) => Some(SpatialBounds::from_coords(
            t.catchment_ids
                .iter()
                .zip(t.gauge_lat.iter().zip(&t.gauge_lon))
                .filter(|(id, _)| train_ids.contains(id.as_str()))
                .map(|(_, (&la, &lo))| (la, lo)),
        )?),
        _ => None,
    };

    let roles = select_feature_roles(config.mode);
    let norm = |ps: &[TimeSeriesPanel]| ps.iter().map(|p| normalization.apply_panel(p)).collect::<Result<Vec<_>>>();
    let train_panels = norm(&train_raw)?;
    let val_panels = norm(&val_raw)?;
    let inputs_table = if config.encoding.include_static || config.encoding.use_linear_space {
        table_for_inputs
    } else {
        None
    };
    let train_series = build_series(&train_panels, inputs_table, &config.encoding, bounds.as_ref(), &roles)?;
    let val_series = build_series(&val_panels, inputs_table, &config.encoding, bounds.as_ref(), &roles)?;

    let static_names: Vec<String> = match (config.encoding.include_static, inputs_table) {
        (true, Some(t)) => t.attribute_names.clone(),
        _ => Vec::new(),
    };
    let manifest = RunManifest {
        feature_names: crate::encodings::feature_names(&config.encoding, &static_names)
            .into_iter()
            .map(|(n, _)| n)
            .collect(),
        encoding: config.encoding.clone(),
        observed: roles.observed_names().iter().map(|s| s.to_string()).collect(),
        targets: roles.target_names().iter().map(|s| s.to_string()).collect(),
    };
    Ok(PreparedData {
        train: WindowedDataset::new(train_series, config.window)?,
        val: WindowedDataset::new(val_series, config.window)?,
        split,
        normalization,
        roles,
        manifest,
        bounds,
        val_panels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::{generate_synthetic_dataset, SyntheticRecipe};

    #[test]
    fn no_validation_catchment_leaks_into_training_windows() {
        let (panels, table) = generate_synthetic_dataset(10, 60, 3, &SyntheticRecipe::default()).unwrap();
        let cfg = DataConfig::default();
        let prep = prepare_data(&panels, Some(&table), &cfg).unwrap();
        let train_ids = prep.train.catchment_ids();
        for id in &prep.split.val_ids {
            assert!(!train_ids.contains(id.as_str()));
        }
        assert_eq!(prep.train.widths().0, cfg.encoding.feature_count(table.attribute_names.len()));
        assert_eq!(prep.manifest.feature_names.len(), prep.train.widths().0);
    }

    #[test]
    fn statics_required_for_static_features() {
        let (panels, _) = generate_synthetic_dataset(4, 60, 3, &SyntheticRecipe::default()).unwrap();
        let cfg = DataConfig::default();
        assert!(matches!(prepare_data(&panels, None, &cfg), Err(Error::Config(_))));
        let cfg = DataConfig { encoding: EncodingConfig::none(), ..DataConfig::default() };
        let prep = prepare_data(&panels, None, &cfg).unwrap();
        assert_eq!(prep.train.widths().0, 0);
    }

    #[test]
    fn normalization_uses_training_catchments_only() {
        let (panels, table) = generate_synthetic_dataset(6, 60, 5, &SyntheticRecipe::default()).unwrap();
        let prep = prepare_data(&panels, Some(&table), &DataConfig::default()).unwrap();
        let train: Vec<_> = panels.iter().filter(|p| prep.split.is_train(p.catchment_id())).cloned().collect();
        let refit = fit_normalization(&train, None, NormScheme::MinMax).unwrap();
        assert_eq!(refit.dynamic, prep.normalization.dynamic);
    }
}
