//! Windowing, tail splits, normalization, the optimization loop and mean
//! ensembles.

mod ensemble;
mod fit;
mod normalize;
mod window;

pub use ensemble::{
    ensemble_forecast, ensemble_forecast_windows, mean_forecast, run_parallel, train_ensemble,
    train_member, EnsembleConfig, TrainedModel,
};
pub use fit::{train, validation_mae, HistoryRow, TrainConfig, TrainHistory, TrainOutcome};
pub use normalize::{Denorm, Normalization, Scaler};
pub use window::{make_windows, split_tail, DataSplit, SeriesSplit, Window};
