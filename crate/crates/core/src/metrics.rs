//! The per-stage evaluation metrics, their CSV serialization, and windowed
//! summaries of a run's time series.

use crate::model::Stage;
use crate::simulation::WorldState;
use crate::Scalar;

/// The evaluation metrics sampled at the end of one stage.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StageMetrics {
    pub stage: Stage,
    /// Benign clients holding a live connection at sampling time.
    pub connected_users: u32,
    /// `connected_users / benign_count`, zero when there are no benign
    /// clients yet.
    pub connected_ratio: Scalar,
    /// Summed capacity of all unblocked proxies, used or not.
    pub total_capacity: u64,
    /// Mean stages waited by the benign clients first served this stage
    /// after an unserved episode; zero when nobody was served after waiting.
    pub mean_wait_time: Scalar,
    pub blocked_proxies: u32,
    pub alive_proxies: u32,
    pub agent_count: u32,
    pub benign_count: u32,
}

impl StageMetrics {
    pub const CSV_HEADER: &'static str = "stage,connected_users,connected_ratio,total_capacity,\
                                          mean_wait_time,blocked_proxies,alive_proxies,agent_count,benign_count";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.stage,
            self.connected_users,
            self.connected_ratio,
            self.total_capacity,
            self.mean_wait_time,
            self.blocked_proxies,
            self.alive_proxies,
            self.agent_count,
            self.benign_count
        )
    }
}

/// Serializes a whole series as the canonical CSV document.
pub fn series_to_csv(series: &[StageMetrics]) -> String {
    let mut out = String::from(StageMetrics::CSV_HEADER);
    out.push('\n');
    for row in series {
        out.push_str(&row.csv_row());
        out.push('\n');
    }
    out
}

/// Reads the world at the end of a stage. Censoring agents count in neither
/// the connected tally nor the ratio denominator; the metric is about
/// genuine censored clients.
pub fn sample(world: &WorldState) -> StageMetrics {
    let mut connected_users = 0u32;
    let mut total_capacity = 0u64;
    let mut blocked_proxies = 0u32;
    let mut alive_proxies = 0u32;
    for proxy in world.proxies.values() {
        if proxy.blocked {
            blocked_proxies += 1;
            continue;
        }
        alive_proxies += 1;
        total_capacity += proxy.capacity as u64;
        connected_users += proxy
            .connected
            .iter()
            .filter(|cid| world.clients[cid].is_benign())
            .count() as u32;
    }

    let benign_count = world.clients.values().filter(|c| c.is_benign()).count() as u32;
    let agent_count = world.clients.len() as u32 - benign_count;
    let connected_ratio = if benign_count == 0 {
        0.0
    } else {
        connected_users as Scalar / benign_count as Scalar
    };
    let mean_wait_time = if world.fulfilled_waits.is_empty() {
        0.0
    } else {
        world.fulfilled_waits.iter().map(|w| *w as Scalar).sum::<Scalar>()
            / world.fulfilled_waits.len() as Scalar
    };

    StageMetrics {
        stage: world.stage,
        connected_users,
        connected_ratio,
        total_capacity,
        mean_wait_time,
        blocked_proxies,
        alive_proxies,
        agent_count,
        benign_count,
    }
}

/// Windowed aggregates of one metric column.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ColumnSummary {
    pub final_value: Scalar,
    pub window_mean: Scalar,
    /// Least-squares slope per stage over the window.
    pub window_slope: Scalar,
}

/// Aggregates for the headline columns of a series.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Summary {
    pub stages: usize,
    pub window: usize,
    pub connected_users: ColumnSummary,
    pub connected_ratio: ColumnSummary,
    pub total_capacity: ColumnSummary,
    pub mean_wait_time: ColumnSummary,
    pub blocked_proxies: ColumnSummary,
    pub alive_proxies: ColumnSummary,
}

/// Summarizes the last `window` stages of a series: final values, windowed
/// means, and least-squares trend slopes. Returns None for an empty series.
/// The window is clipped to the series length.
pub fn summarize(series: &[StageMetrics], window: usize) -> Option<Summary> {
    if series.is_empty() {
        return None;
    }
    let window = window.clamp(1, series.len());
    let tail = &series[series.len() - window..];

    let column = |extract: fn(&StageMetrics) -> Scalar| -> ColumnSummary {
        let values: Vec<Scalar> = tail.iter().map(extract).collect();
        ColumnSummary {
            final_value: extract(series.last().unwrap()),
            window_mean: values.iter().sum::<Scalar>() / values.len() as Scalar,
            window_slope: least_squares_slope(&values),
        }
    };

    Some(Summary {
        stages: series.len(),
        window,
        connected_users: column(|m| m.connected_users as Scalar),
        connected_ratio: column(|m| m.connected_ratio),
        total_capacity: column(|m| m.total_capacity as Scalar),
        mean_wait_time: column(|m| m.mean_wait_time),
        blocked_proxies: column(|m| m.blocked_proxies as Scalar),
        alive_proxies: column(|m| m.alive_proxies as Scalar),
    })
}

/// Slope of the least-squares line through `(i, values[i])`. Values are
/// shifted by the first element before fitting, so a constant series yields
/// an exact zero.
pub fn least_squares_slope(values: &[Scalar]) -> Scalar {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let x_mean = (n as Scalar - 1.0) / 2.0;
    let shift = values[0];
    let mut numerator = 0.0;
    let mut denominator = 0.0;
    for (i, v) in values.iter().enumerate() {
        let dx = i as Scalar - x_mean;
        numerator += dx * (v - shift);
        denominator += dx * dx;
    }
    numerator / denominator
}

impl Summary {
    /// Human-readable `key: value` lines for summary files.
    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("stages: {}\n", self.stages));
        out.push_str(&format!("window: {}\n", self.window));
        let mut col = |name: &str, c: &ColumnSummary| {
            out.push_str(&format!("final.{name}: {}\n", c.final_value));
            out.push_str(&format!("window_mean.{name}: {}\n", c.window_mean));
            out.push_str(&format!("window_slope.{name}: {}\n", c.window_slope));
        };
        col("connected_users", &self.connected_users);
        col("connected_ratio", &self.connected_ratio);
        col("total_capacity", &self.total_capacity);
        col("mean_wait_time", &self.mean_wait_time);
        col("blocked_proxies", &self.blocked_proxies);
        col("alive_proxies", &self.alive_proxies);
        out
    }
}
