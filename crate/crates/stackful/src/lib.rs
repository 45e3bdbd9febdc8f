//! Concolic testing toolkit for a minimal client/server event language.
//!
//! A program under test is split into a client, which fires `send`
//! expressions, and a server, which registers message handlers. The machine
//! executes programs concretely while shadowing every value with a symbolic
//! expression; the driver explores server paths, catalogs reachable errors,
//! then checks which of those errors a real client can actually trigger by
//! joining client and server path constraints at each send.

pub mod cli;
pub mod driver;
pub mod lang;
pub mod machine;
pub mod report;
pub mod selector;
pub mod solver;
pub mod symbolic;
