use std::fmt;

/// One row of a parameter report: all trainable or all non-trainable
/// tensors of a single layer.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
pub struct LayerCount {
    pub name: String,
    pub count: usize,
    pub trainable: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
pub struct ParameterReport {
    pub total: usize,
    pub trainable: usize,
    pub non_trainable: usize,
    pub per_layer: Vec<LayerCount>,
}

impl ParameterReport {
    pub(crate) fn from_tensors<'a>(tensors: impl IntoIterator<Item = (&'a str, usize, bool)>) -> Self {
        let mut per_layer: Vec<LayerCount> = Vec::new();
        for (name, count, trainable) in tensors {
            let layer = name.rsplit_once('.').map_or(name, |(l, _)| l);
            match per_layer.iter_mut().find(|r| r.name == layer && r.trainable == trainable) {
                Some(row) => row.count += count,
                None => per_layer.push(LayerCount {
                    name: layer.to_string(),
                    count,
                    trainable,
                }),
            }
        }
        let trainable = per_layer.iter().filter(|r| r.trainable).map(|r| r.count).sum();
        let non_trainable = per_layer.iter().filter(|r| !r.trainable).map(|r| r.count).sum();
        ParameterReport {
            total: trainable + non_trainable,
            trainable,
            non_trainable,
            per_layer,
        }
    }

    /// Sum over layers whose name starts with `prefix`.
    pub fn count_matching(&self, prefix: &str, trainable: Option<bool>) -> usize {
        self.per_layer
            .iter()
            .filter(|r| r.name.starts_with(prefix) && trainable.is_none_or(|t| r.trainable == t))
            .map(|r| r.count)
            .sum()
    }
}

impl fmt::Display for ParameterReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let width = self.per_layer.iter().map(|r| r.name.len()).max().unwrap_or(5).max(5);
        writeln!(f, "{:<width$}  {:>10}  trainable", "layer", "params")?;
        for r in &self.per_layer {
            writeln!(f, "{:<width$}  {:>10}  {}", r.name, r.count, if r.trainable { "yes" } else { "no" })?;
        }
        writeln!(f, "Total params:         {}", self.total)?;
        writeln!(f, "Trainable params:     {}", self.trainable)?;
        write!(f, "Non-trainable params: {}", self.non_trainable)
    }
}
