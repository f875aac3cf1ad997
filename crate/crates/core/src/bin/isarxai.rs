use std::process::ExitCode;

// Training churns through large per-image buffers that glibc keeps handing back to the OS.
#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

fn main() -> ExitCode {
    isarxai::cli::main_with_args(std::env::args_os())
}
