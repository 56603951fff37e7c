//! Encode and decode store protocol frames by hand.

use hiervec::service::wire::read_message;
use hiervec::service::{Message, PartitionResultRequest};
use hiervec::{Candidate, VectorId};

fn main() -> hiervec::Result<()> {
    let req = Message::GetPartitionResult(PartitionResultRequest {
        level: 0,
        m: 4,
        query: vec![0.5; 8],
        pids: vec![VectorId::new(1, 3), VectorId::new(1, 17)],
    });
    let frame = req.encode();
    println!("request: {} bytes, opcode {:#04x}", frame.len(), req.opcode());
    assert_eq!(read_message(&frame[..])?, Some(req));

    let reply = Message::PartitionResult((0..4).map(|i| Candidate::new(VectorId::new(0, i), i as f32 * 0.1)).collect());
    let frame = reply.encode();
    println!("reply: {} bytes: {:02x?}", frame.len(), &frame[..9]);
    assert_eq!(read_message(&frame[..])?, Some(reply));

    // a truncated frame is an error, not a short read
    assert!(read_message(&frame[..frame.len() - 1]).is_err());
    Ok(())
}
