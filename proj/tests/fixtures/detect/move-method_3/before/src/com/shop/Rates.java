package com.shop;

class Rates {
}
