/* tslint:disable */
/* eslint-disable */

/**
 * Eigenvalues `[re_0, im_0, re_1, im_1, ...]` of the synchronization error
 * Jacobian at a burned-in master state, sorted by decreasing real part.
 */
export function jacobian_spectrum(order: number, x_period: number, coupling_d: number): Float64Array;

/**
 * Adaptive slave driven by the master at `X = 120`, `J = 240`.
 * Returns rows `[t, E2, alpha_hat, beta_hat, gamma_hat]` every 0.1 time units.
 * `snr_db <= 0` means noiseless observations.
 */
export function run_estimation(order: number, coupling_d: number, mu: number, snr_db: number, t_end: number, seed: number): Float64Array;

/**
 * Master field `u(t, x)` after burn-in, as `nt` rows of `nx` samples on a
 * uniform grid, `t` running over `[0, t_end]`.
 */
export function simulate_field(x_period: number, order: number, alpha: number, beta: number, gamma: number, t_end: number, nx: number, nt: number): Float64Array;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly jacobian_spectrum: (a: number, b: number, c: number) => [number, number, number, number];
    readonly run_estimation: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number, number];
    readonly simulate_field: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: number) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_start: () => void;
}

export type SyncInitInput = BufferSource | WebAssembly.Module;

/**
 * Instantiates the given `module`, which can either be bytes or
 * a precompiled `WebAssembly.Module`.
 *
 * @param {{ module: SyncInitInput }} module - Passing `SyncInitInput` directly is deprecated.
 *
 * @returns {InitOutput}
 */
export function initSync(module: { module: SyncInitInput } | SyncInitInput): InitOutput;

/**
 * If `module_or_path` is {RequestInfo} or {URL}, makes a request and
 * for everything else, calls `WebAssembly.instantiate` directly.
 *
 * @param {{ module_or_path: InitInput | Promise<InitInput> }} module_or_path - Passing `InitInput` directly is deprecated.
 *
 * @returns {Promise<InitOutput>}
 */
export default function __wbg_init (module_or_path?: { module_or_path: InitInput | Promise<InitInput> } | InitInput | Promise<InitInput>): Promise<InitOutput>;
