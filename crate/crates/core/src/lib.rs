pub mod airframe;
pub mod geometry;
pub mod lowlevel;
pub mod guidance;
pub mod swarmnet;
pub mod planning;
pub mod coordination;
pub mod sim;
pub mod gcs;
