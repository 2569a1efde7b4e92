//! Round-based in-process channel between simulated parties.

use std::collections::VecDeque;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptRecord {
    pub round: u64,
    pub from: usize,
    pub to: usize,
    pub kind: String,
    pub payload_hash: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Transcript {
    pub records: Vec<TranscriptRecord>,
}

impl Transcript {
    pub fn write_json_lines<W: Write>(&self, mut out: W) -> io::Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut out, r)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_json_lines(&self) -> String {
        let mut buf = Vec::new();
        self.write_json_lines(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("serde_json emits UTF-8")
    }
}

#[derive(Debug, Clone)]
pub struct Message {
    pub round: u64,
    pub from: usize,
    pub kind: &'static str,
    pub payload: Vec<u8>,
}

#[derive(Debug)]
pub struct MessageBus {
    round: u64,
    inboxes: Vec<VecDeque<Message>>,
    transcript: Transcript,
}

impl MessageBus {
    pub fn new(parties: usize) -> Self {
        MessageBus { round: 0, inboxes: vec![VecDeque::new(); parties], transcript: Transcript::default() }
    }

    pub fn parties(&self) -> usize {
        self.inboxes.len()
    }

    pub fn round(&self) -> u64 {
        self.round
    }

    /// Start the next round. Undelivered messages from the previous round are dropped.
    pub fn next_round(&mut self) -> u64 {
        self.round += 1;
        for inbox in &mut self.inboxes {
            inbox.clear();
        }
        self.round
    }

    pub fn send(&mut self, from: usize, to: usize, kind: &'static str, payload: Vec<u8>) {
        self.transcript.records.push(TranscriptRecord {
            round: self.round,
            from,
            to,
            kind: kind.to_string(),
            payload_hash: hex::encode(Sha256::digest(&payload)),
        });
        self.inboxes[to].push_back(Message { round: self.round, from, kind, payload });
    }

    pub fn broadcast(&mut self, from: usize, kind: &'static str, payload: &[u8]) {
        for to in 0..self.parties() {
            if to != from {
                self.send(from, to, kind, payload.to_vec());
            }
        }
    }

    /// Drain `party`'s inbox, ordered by sender.
    pub fn receive(&mut self, party: usize) -> Vec<Message> {
        let mut out: Vec<Message> = self.inboxes[party].drain(..).collect();
        out.sort_by_key(|m| m.from);
        out
    }

    pub fn transcript(&self) -> &Transcript {
        &self.transcript
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn broadcast_records_each_link() {
        let mut bus = MessageBus::new(3);
        bus.next_round();
        bus.broadcast(1, "open", &[1, 2, 3]);
        assert_eq!(bus.transcript().records.len(), 2);
        let got = bus.receive(0);
        assert_eq!(got.len(), 1);
        assert_eq!((got[0].from, got[0].round, got[0].kind), (1, 1, "open"));
        assert!(bus.receive(1).is_empty());
        let lines = bus.transcript().to_json_lines();
        assert_eq!(lines.lines().count(), 2);
        let rec: TranscriptRecord = serde_json::from_str(lines.lines().next().unwrap()).unwrap();
        assert_eq!(rec.payload_hash.len(), 64);
        assert_eq!((rec.from, rec.to), (1, 0));
    }
}
