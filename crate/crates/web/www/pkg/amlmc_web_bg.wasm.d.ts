/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_densityview_free: (a: number, b: number) => void;
export const densityview_cells: (a: number) => [number, number];
export const densityview_errorEstimate: (a: number) => number;
export const densityview_qoi: (a: number) => number;
export const errorDensity: (a: number, b: number, c: number) => [number, number, number];
export const fieldGrid: (a: number, b: number, c: number) => [number, number, number, number];
export const maxMesh: () => number;
export const meshCells: (a: number, b: number) => [number, number, number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_start: () => void;
