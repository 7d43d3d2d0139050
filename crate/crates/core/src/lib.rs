pub mod archive;
pub mod atom;
pub mod bench;
pub mod client;
pub mod db;
pub mod depexpr;
pub mod ebuild;
pub mod farm;
pub mod resolver;
pub mod store;
pub mod version;
pub mod wire;
