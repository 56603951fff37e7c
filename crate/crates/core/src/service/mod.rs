//! Networked deployment over plain TCP.
//!
//! Store nodes ([`serve_store`]) hold the partitions hash-placed on them and
//! answer GET_PARTITION_RESULT by scanning the listed partitions against the
//! query and returning their local top-`m`. The [`Engine`] keeps only the
//! root graph, sends one request per involved node per level, and merges the
//! replies. Answers are identical to [`crate::hierarchy::search`] for any
//! node count.

mod engine;
mod store;
pub mod wire;

pub use engine::{Engine, Wave};
pub use store::{serve_store, StoreServer, StoreShard};
pub use wire::{ErrorFrame, Message, PartitionResultRequest, StoreStats};

use std::time::Duration;

use crate::cluster::Placement;
use crate::error::Result;
use crate::hierarchy::HierarchicalIndex;

/// Start `node_count` store nodes for `index` on ephemeral localhost ports.
pub fn spawn_local_stores(index: &HierarchicalIndex, node_count: usize) -> Result<Vec<StoreServer>> {
    let placement = Placement::new(node_count, index.pids())?;
    (0..node_count)
        .map(|node| serve_store(StoreShard::from_index(index, &placement, node)?, "127.0.0.1:0"))
        .collect()
}

/// Addresses of running stores, in node order.
pub fn store_addrs(stores: &[StoreServer]) -> Vec<String> {
    stores.iter().map(|s| s.local_addr().to_string()).collect()
}

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(10);
