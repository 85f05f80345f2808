pub mod hdbscan_reference;
