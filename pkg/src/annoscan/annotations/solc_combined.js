#!/usr/bin/env node
// Minimal `solc --combined-json` emulation on top of solc-js.
// Usage: solc_combined.js --combined-json bin,bin-runtime,srcmap,srcmap-runtime,abi,ast file.sol...
'use strict';
const fs = require('fs');
const path = require('path');

function loadSolc() {
  const override = process.env.ANNOSCAN_SOLCJS;
  if (override) return require(override);
  return require('solc');
}

function main(argv) {
  let fields = ['bin', 'bin-runtime', 'srcmap', 'srcmap-runtime', 'abi', 'ast'];
  const files = [];
  for (let i = 0; i < argv.length; i++) {
    const a = argv[i];
    if (a === '--combined-json') {
      fields = argv[++i].split(',');
    } else if (a === '--version') {
      process.stdout.write('solc-js, the solidity compiler commandline interface\nVersion: ' + loadSolc().version() + '\n');
      return 0;
    } else if (a.startsWith('--')) {
      // options accepted for compatibility with the native binary
      if (a === '--allow-paths' || a === '--evm-version') i++;
    } else {
      files.push(a);
    }
  }
  const solc = loadSolc();
  const sources = {};
  for (const f of files) sources[f] = { content: fs.readFileSync(f, 'utf8') };
  const input = {
    language: 'Solidity',
    sources: sources,
    settings: {
      optimizer: { enabled: false },
      outputSelection: {
        '*': {
          '*': ['abi', 'evm.bytecode.object', 'evm.bytecode.sourceMap',
                'evm.deployedBytecode.object', 'evm.deployedBytecode.sourceMap'],
          '': ['ast'],
        },
      },
    },
  };
  const out = JSON.parse(solc.compileStandardWrapper(JSON.stringify(input)));
  const errors = (out.errors || []).filter((e) => e.severity === 'error');
  for (const e of out.errors || []) process.stderr.write(e.formattedMessage || e.message);
  if (errors.length) return 1;

  const combined = { contracts: {}, sources: {}, sourceList: files, version: solc.version() };
  for (const file of Object.keys(out.contracts || {})) {
    for (const name of Object.keys(out.contracts[file])) {
      const c = out.contracts[file][name];
      const entry = {};
      if (fields.includes('bin')) entry['bin'] = c.evm.bytecode.object;
      if (fields.includes('bin-runtime')) entry['bin-runtime'] = c.evm.deployedBytecode.object;
      if (fields.includes('srcmap')) entry['srcmap'] = c.evm.bytecode.sourceMap;
      if (fields.includes('srcmap-runtime')) entry['srcmap-runtime'] = c.evm.deployedBytecode.sourceMap;
      if (fields.includes('abi')) entry['abi'] = JSON.stringify(c.abi);
      combined.contracts[file + ':' + name] = entry;
    }
  }
  for (const file of files) {
    const s = (out.sources || {})[file] || {};
    combined.sources[file] = fields.includes('ast') ? { AST: s.ast } : {};
  }
  process.stdout.write(JSON.stringify(combined));
  return 0;
}

process.exitCode = main(process.argv.slice(2));
