use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use anyhow::{Context, Result};
use mrvcg::AuctionResult;
use serde::Serialize;

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct AgentRecord<'a> {
    record: &'static str,
    agent_id: &'a str,
    allocation: String,
    value: f64,
    payment: f64,
}

fn allocation_label(counts: &[u32]) -> String {
    counts.iter().map(u32::to_string).collect::<Vec<_>>().join(";")
}

/// One `agent` row per bid, then a `total` row with the welfare and the
/// summed payments. Allocations are `;`-separated unit counts.
pub fn write_auction_csv<W: io::Write>(out: W, r: &AuctionResult) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for a in &r.agents {
        w.serialize(AgentRecord {
            record: "agent",
            agent_id: &a.agent_id,
            allocation: allocation_label(a.allocation.counts()),
            value: a.value,
            payment: a.payment,
        })?;
    }
    let used: Vec<u32> = r.units_allocated().iter().map(|&u| u as u32).collect();
    w.serialize(AgentRecord {
        record: "total",
        agent_id: "",
        allocation: allocation_label(&used),
        value: r.social_welfare,
        payment: r.total_payments(),
    })?;
    w.flush()?;
    Ok(())
}

pub fn auction_table(r: &AuctionResult) -> String {
    let width = r.agents.iter().map(|a| a.agent_id.len()).max().unwrap_or(0).max(5);
    let mut s = String::new();
    let _ = writeln!(s, "{:<width$}  {:>16}  {:>14}  {:>14}", "agent", "allocation", "value", "payment");
    for a in r.agents.iter().filter(|a| a.is_winner()) {
        let _ = writeln!(
            s,
            "{:<width$}  {:>16}  {:>14.6}  {:>14.6}",
            a.agent_id,
            a.allocation.to_string(),
            a.value,
            a.payment
        );
    }
    let losers = r.agents.len() - r.winners().count();
    if losers > 0 {
        let _ = writeln!(s, "({losers} agents without a valued allocation omitted)");
    }
    let _ = writeln!(s, "capacity        {}", r.capacity);
    let _ = writeln!(s, "social welfare  {:.6}", r.social_welfare);
    let _ = writeln!(s, "total payments  {:.6}", r.total_payments());
    s
}
