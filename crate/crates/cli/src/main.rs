use cfrecon_core::alloc::CountingAllocator;

#[global_allocator]
static GLOBAL: CountingAllocator = CountingAllocator;

fn main() {
    std::process::exit(cfrecon_cli::run_cli(std::env::args()));
}
