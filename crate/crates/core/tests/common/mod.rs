#![allow(dead_code)]

pub mod gradprobes;
