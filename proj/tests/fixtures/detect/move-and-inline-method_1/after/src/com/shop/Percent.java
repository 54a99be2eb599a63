package com.shop;

public class Percent {
}
