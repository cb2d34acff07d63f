use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::topology::VertexId;

/// One drained chunk of a flow on one directed link.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PacketRecord {
    pub flow_id: u64,
    pub edge: (VertexId, VertexId),
    /// When the chunk has fully reached `edge.1`.
    pub arrival_t: f64,
    pub size: u64,
    pub src_host: VertexId,
    pub dst_host: VertexId,
}

#[derive(Serialize, Deserialize)]
struct Row {
    flow_id: u64,
    edge_u: VertexId,
    edge_v: VertexId,
    arrival_t: f64,
    size_bytes: u64,
    src_host: VertexId,
    dst_host: VertexId,
}

/// `flow_id,edge_u,edge_v,arrival_t,size_bytes,src_host,dst_host`
pub fn write_event_csv<W: Write>(events: &[PacketRecord], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for e in events {
        w.serialize(Row {
            flow_id: e.flow_id,
            edge_u: e.edge.0,
            edge_v: e.edge.1,
            arrival_t: e.arrival_t,
            size_bytes: e.size,
            src_host: e.src_host,
            dst_host: e.dst_host,
        })?;
    }
    if events.is_empty() {
        w.write_record(["flow_id", "edge_u", "edge_v", "arrival_t", "size_bytes", "src_host", "dst_host"])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_event_csv<R: Read>(input: R) -> csv::Result<Vec<PacketRecord>> {
    let mut r = csv::Reader::from_reader(input);
    r.deserialize::<Row>()
        .map(|row| {
            row.map(|x| PacketRecord {
                flow_id: x.flow_id,
                edge: (x.edge_u, x.edge_v),
                arrival_t: x.arrival_t,
                size: x.size_bytes,
                src_host: x.src_host,
                dst_host: x.dst_host,
            })
        })
        .collect()
}
